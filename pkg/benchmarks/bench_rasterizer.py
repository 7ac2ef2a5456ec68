#!/usr/bin/env python3
"""Benchmark: compiled rasterizer kernel vs the pure-numpy fallback.

Renders the default scene and per-class codebook-style templates with both
backends and prints triangles/s and renders/s.  Run from the repo root:

    python benchmarks/bench_rasterizer.py [--repeats N]
"""

import argparse
import time

import numpy as np

from lucidlab._kernels import BACKEND, raster_numpy
from lucidlab.perception.codebook import canonical_rotation, icosphere_vertices, template_camera
from lucidlab.perception.render import NEAR_PLANE
from lucidlab.scene import default_scene
from lucidlab.shapes import tessellate

try:
    from lucidlab._kernels._rasterize import fill_triangles as fill_compiled
except ImportError:
    fill_compiled = None


def scene_triangles():
    scene = default_scene()
    cam = scene.camera
    from lucidlab.perception.render import _cam_triangles
    tris = np.vstack(_cam_triangles(list(scene.objects), cam,
                                    scene.robot_base_pose, 16))
    return np.ascontiguousarray(tris), cam


def template_jobs():
    cam = template_camera()
    jobs = []
    scene = default_scene()
    for obj in scene.objects:
        mesh = tessellate(obj.shape, 16)
        center = 0.5 * (mesh.vertices.min(0) + mesh.vertices.max(0))
        for d in icosphere_vertices(0):
            rot = canonical_rotation(d)
            trans = np.array([0.0, 0.0, 0.40]) - rot @ center
            jobs.append((np.ascontiguousarray(mesh.triangles() @ rot.T + trans), cam))
    return jobs


def run(fill, tris, cam, repeats):
    start = time.perf_counter()
    for _ in range(repeats):
        depth = np.zeros((cam.height, cam.width))
        fill(tris, cam.fx, cam.fy, cam.cx, cam.cy, NEAR_PLANE, depth)
    dt = time.perf_counter() - start
    return dt / repeats, depth


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeats", type=int, default=20)
    args = ap.parse_args()

    backends = [("numpy", raster_numpy.fill_triangles)]
    if fill_compiled is not None:
        backends.insert(0, ("compiled", fill_compiled))
    print(f"active backend at import: {BACKEND}")

    tris, cam = scene_triangles()
    print(f"\nfull scene render ({len(tris)} triangles, "
          f"{cam.width}x{cam.height}):")
    ref = None
    for name, fill in backends:
        dt, depth = run(fill, tris, cam, args.repeats)
        if ref is None:
            ref = depth
        match = "exact" if np.array_equal(depth, ref) else "DIFFERS"
        print(f"  {name:9s} {dt * 1000:8.2f} ms/render  "
              f"{len(tris) / dt / 1e6:7.2f} Mtri/s  ({match})")

    jobs = template_jobs()
    print(f"\ncodebook templates ({len(jobs)} renders, "
          f"{jobs[0][1].width}x{jobs[0][1].height}):")
    for name, fill in backends:
        start = time.perf_counter()
        for tris_j, cam_j in jobs:
            depth = np.zeros((cam_j.height, cam_j.width))
            fill(tris_j, cam_j.fx, cam_j.fy, cam_j.cx, cam_j.cy, NEAR_PLANE, depth)
        dt = time.perf_counter() - start
        print(f"  {name:9s} {dt / len(jobs) * 1000:8.2f} ms/render  "
              f"{len(jobs) / dt:7.1f} renders/s")


if __name__ == "__main__":
    main()
