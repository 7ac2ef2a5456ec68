"""Depth rendering of scene objects through the pinhole camera model.

A z-buffer rasterizer (compiled kernel when available) fills range images in
meters, 0 = no hit.  Surfaces closer than NEAR_PLANE (1 cm) are clamped to it
rather than rejected, so a camera inside geometry still renders.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from lucidlab._kernels import fill_triangles
from lucidlab.geometry import CameraModel, Frame, Pose6D, compose
from lucidlab.shapes import SceneObject, ShapeModel, tessellate

NEAR_PLANE = 0.01

_MESH_CACHE: dict[tuple[int, int], tuple[ShapeModel, np.ndarray]] = {}


@dataclass(frozen=True)
class DepthImage:
    """Row-major range image (meters, 0 = no hit) plus its camera."""

    data: np.ndarray
    camera: CameraModel

    def __post_init__(self):
        d = np.asarray(self.data, dtype=np.float64)
        if d.shape != (self.camera.height, self.camera.width):
            raise ValueError("depth data shape must match the camera size")
        if not np.all(np.isfinite(d)) or d.min() < 0:
            raise ValueError("depth values must be finite and nonnegative")
        object.__setattr__(self, "data", d)

    @property
    def width(self) -> int:
        return self.camera.width

    @property
    def height(self) -> int:
        return self.camera.height


def camera_pose_world(cam: CameraModel, robot_base_pose: Pose6D | None = None) -> Pose6D:
    base = robot_base_pose if robot_base_pose is not None else Pose6D.identity(Frame.WORLD)
    return compose(base, cam.extrinsics)


def _object_triangles(obj: SceneObject, resolution: int) -> np.ndarray:
    key = (id(obj.shape), resolution)
    hit = _MESH_CACHE.get(key)
    if hit is None or hit[0] is not obj.shape:
        _MESH_CACHE[key] = (obj.shape, tessellate(obj.shape, resolution).triangles())
    return _MESH_CACHE[key][1]


def _world_to_cam_matrix(cam: CameraModel, robot_base_pose: Pose6D | None) -> np.ndarray:
    return camera_pose_world(cam, robot_base_pose).inverse().matrix


def _rasterize(tris_cam: np.ndarray, cam: CameraModel) -> np.ndarray:
    depth = np.zeros((cam.height, cam.width), dtype=np.float64)
    if len(tris_cam):
        fill_triangles(np.ascontiguousarray(tris_cam), cam.fx, cam.fy,
                       cam.cx, cam.cy, NEAR_PLANE, depth)
    return depth


def _cam_triangles(objects, cam, robot_base_pose, resolution):
    m = _world_to_cam_matrix(cam, robot_base_pose)
    rot, trans = m[:3, :3], m[:3, 3]
    out = []
    for obj in objects:
        tris = _object_triangles(obj, resolution)
        world = tris @ obj.pose.rotation.T + obj.pose.position
        out.append(world @ rot.T + trans)
    return out


def render_depth(scene: list[SceneObject], cam: CameraModel,
                 robot_base_pose: Pose6D | None = None,
                 resolution: int = 16) -> DepthImage:
    """Z-buffer render of the whole scene (single rasterizer pass)."""
    if not scene:
        raise ValueError("cannot render an empty scene")
    tris = _cam_triangles(scene, cam, robot_base_pose, resolution)
    return DepthImage(_rasterize(np.vstack(tris), cam), cam)


def render_object(obj: SceneObject, cam: CameraModel,
                  robot_base_pose: Pose6D | None = None,
                  resolution: int = 16) -> DepthImage:
    """Render a single object alone (used for masks and occlusion)."""
    (tris,) = _cam_triangles([obj], cam, robot_base_pose, resolution)
    return DepthImage(_rasterize(tris, cam), cam)


def object_masks(scene: list[SceneObject], cam: CameraModel,
                 robot_base_pose: Pose6D | None = None,
                 resolution: int = 16) -> tuple[DepthImage, dict[int, np.ndarray]]:
    """Combined depth plus per-object visibility masks.

    The combined image is the per-pixel min over single-object renders
    (0 treated as no hit); an object's mask marks pixels where it is the
    nearest surface.
    """
    singles = {obj.id: render_object(obj, cam, robot_base_pose, resolution).data
               for obj in scene}
    stack = np.stack(list(singles.values()))
    stack_inf = np.where(stack > 0, stack, np.inf)
    combined = stack_inf.min(axis=0)
    combined[~np.isfinite(combined)] = 0.0
    masks = {oid: (d > 0) & (d == combined) for oid, d in singles.items()}
    return DepthImage(combined, cam), masks


def write_pgm(depth: DepthImage, path) -> None:
    """Export as 16-bit binary PGM, millimeter quantization (debug aid)."""
    mm = np.clip(np.round(depth.data * 1000.0), 0, 65535).astype(">u2")
    with open(path, "wb") as f:
        f.write(f"P5\n{depth.width} {depth.height}\n65535\n".encode())
        f.write(mm.tobytes())


def read_pgm(path) -> np.ndarray:
    """Read back a 16-bit PGM written by write_pgm; returns millimeters."""
    with open(path, "rb") as f:
        magic = f.readline().strip()
        if magic != b"P5":
            raise ValueError("not a binary PGM file")
        dims = f.readline().split()
        maxval = int(f.readline())
        if maxval != 65535:
            raise ValueError("expected 16-bit PGM")
        w, h = int(dims[0]), int(dims[1])
        return np.frombuffer(f.read(w * h * 2), dtype=">u2").reshape(h, w)
