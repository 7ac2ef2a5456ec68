"""Codebook pose estimation and occlusion measurement.

Estimation mirrors a retrieval pipeline: (1) translation from the masked
depth centroid, (2) viewpoint retrieval by descriptor correlation, (3)
in-plane rotation by exhaustive 1-degree correlation search against the
retrieved template.
"""

from __future__ import annotations

import numpy as np

from lucidlab.geometry import (CameraModel, Pose6D, Frame, SymmetryKind, camera_to_base,
                               matrix_to_quat, quat_from_axis_angle, quat_to_matrix)
from lucidlab.perception.codebook import (DESC_SIDE, ViewpointCodebook, _descriptor,
                                          normalized_template, render_mesh_depth)
from lucidlab.perception.render import DepthImage, render_object, object_masks
from lucidlab.perception.types import PerceptionEstimate
from lucidlab.shapes import SceneObject

MIN_VALID_FRACTION = 0.30
COARSE_STEP_DEG = 15
FINE_CANDIDATES = 3


class OcclusionError(ValueError):
    """Target object is not visible even when rendered alone."""


_ROT_GRIDS: dict[tuple[int, bytes], tuple] = {}


def _rotation_grid(side: int, angles_deg: np.ndarray):
    """Precomputed bilinear gather indices/weights for in-image rotations."""
    key = (side, angles_deg.tobytes())
    if key not in _ROT_GRIDS:
        c = (side - 1) / 2.0
        ys, xs = np.mgrid[0:side, 0:side]
        u = xs.ravel() - c
        v = ys.ravel() - c
        th = np.radians(angles_deg)[:, None]
        su = np.cos(th) * u - np.sin(th) * v + c
        sv = np.sin(th) * u + np.cos(th) * v + c
        u0 = np.floor(su).astype(np.int32)
        v0 = np.floor(sv).astype(np.int32)
        fu = su - u0
        fv = sv - v0
        taps = []
        for du, dv, w in ((0, 0, (1 - fu) * (1 - fv)), (1, 0, fu * (1 - fv)),
                          (0, 1, (1 - fu) * fv), (1, 1, fu * fv)):
            uu = u0 + du
            vv = v0 + dv
            ok = (uu >= 0) & (uu < side) & (vv >= 0) & (vv < side)
            flat = np.clip(vv, 0, side - 1) * side + np.clip(uu, 0, side - 1)
            taps.append((flat, np.where(ok, w, 0.0).astype(np.float32)))
        _ROT_GRIDS[key] = tuple(taps)
    return _ROT_GRIDS[key]


def _rotate_stack(img: np.ndarray, angles_deg: np.ndarray) -> np.ndarray:
    """Bilinear resample of img under in-image rotations about its center.

    Returns (len(angles), side*side); pixels sampled outside the patch are 0.
    """
    flat = img.ravel().astype(np.float32)
    out = None
    for idx, w in _rotation_grid(img.shape[0], angles_deg):
        term = w * flat[idx]
        out = term if out is None else out + term
    return out


def _axis_rotation(axis: np.ndarray, angle: float) -> np.ndarray:
    return quat_to_matrix(quat_from_axis_angle(axis, angle))


def estimate_pose(depth: DepthImage, mask: np.ndarray,
                  codebook: ViewpointCodebook,
                  object_id: int = 0) -> PerceptionEstimate:
    """Estimate the object pose from its depth pixels under `mask`.

    Returns detected=False when the mask is empty or fewer than 30% of its
    pixels carry valid depth.  The pose is converted to ROBOT_BASE through
    the depth image's camera extrinsics; confidence is the best correlation.
    """
    cam = depth.camera
    mask = np.asarray(mask, dtype=bool)
    valid = mask & (depth.data > 0)
    if mask.sum() == 0 or valid.sum() < MIN_VALID_FRACTION * mask.sum():
        return PerceptionEstimate.missed(object_id)

    query = normalized_template(depth.data, mask)
    if query is None:
        return PerceptionEstimate.missed(object_id)

    ys, xs = np.nonzero(valid)
    z = depth.data[ys, xs]
    pts = np.column_stack([(xs + 0.5 - cam.cx) / cam.fx * z,
                           (ys + 0.5 - cam.cy) / cam.fy * z, z])
    centroid = pts.mean(axis=0)

    descs = codebook.descriptor_matrix  # (N, side^2)

    coarse_angles = np.arange(0.0, 360.0, COARSE_STEP_DEG)
    coarse = _rotate_stack(query, coarse_angles)
    norms = np.linalg.norm(coarse, axis=1)
    norms[norms == 0] = 1.0
    scores = (coarse / norms[:, None]) @ descs.T           # (K, N)
    per_entry = scores.max(axis=0)
    top = np.argsort(per_entry)[::-1][:FINE_CANDIDATES]

    fine_angles = np.arange(0.0, 360.0, 1.0)
    fine = _rotate_stack(query, fine_angles)
    fnorms = np.linalg.norm(fine, axis=1)
    fnorms[fnorms == 0] = 1.0
    fine = fine / fnorms[:, None]
    fscores = fine @ descs[top].T                          # (360, k)

    # _rotate_stack inverse-warps, so matching at +a means the object is
    # spun by +a about the viewing ray relative to the canonical template.
    ray = centroid / np.linalg.norm(centroid)
    tris = codebook.triangles
    query_depth = np.where(valid, depth.data, 0.0)
    seeds = []
    for k, entry_idx in enumerate(top):
        entry = codebook.entries[int(entry_idx)]
        angle = fine_angles[int(np.argmax(fscores[:, k]))]
        r_delta = _axis_rotation(ray, np.radians(angle))
        r_est = r_delta @ entry.rotation
        origin = centroid + r_delta @ entry.centroid_offset
        corr = float(fscores[:, k].max())
        if tris is None:
            seeds.append((corr, corr, r_est, origin))
            continue
        origin = _refine_translation(tris, r_est, origin, centroid, cam)
        seeds.append((_depth_score(tris, r_est, origin, query_depth, valid, cam),
                      corr, r_est, origin))
    seeds.sort(key=lambda s: s[0], reverse=True)

    if tris is not None:
        sweep_spin = codebook.symmetry.kind is not SymmetryKind.CONTINUOUS_Z
        # Second seed only refined when the leader is not clearly ahead.
        contested = len(seeds) > 1 and seeds[0][0] - seeds[1][0] < 0.003
        refined = []
        for s0, corr, r_est, origin in seeds[:2 if contested else 1]:
            if sweep_spin:
                r_est, _ = _spin_sweep(tris, r_est, origin, query_depth, valid, cam)
            r_est, s = _refine_orientation(tris, r_est, origin, query_depth,
                                           valid, cam)
            origin = _refine_translation(tris, r_est, origin, centroid, cam)
            refined.append((s, corr, r_est, origin))
        refined.sort(key=lambda s: s[0], reverse=True)
        seeds = refined
    _, confidence, r_est, origin = seeds[0]

    pose_cam = Pose6D(origin, matrix_to_quat(r_est), Frame.CAMERA)
    return PerceptionEstimate(object_id=object_id, detected=True,
                              pose=camera_to_base(pose_cam, cam),
                              confidence=max(0.0, min(1.0, confidence)))


MISS_PENALTY_M = 0.03


def _depth_score(triangles, rotation, origin, query_depth, query_hit, cam) -> float:
    """Negative mean metric depth discrepancy against the observed image.

    The render is z-shifted to the query's mean depth on the overlap, so the
    score measures shape (tilt ramps, silhouette) rather than residual
    translation; silhouette misses cost MISS_PENALTY_M per pixel.
    """
    d = render_mesh_depth(triangles, rotation, origin, cam)
    hit = d > 0
    both = hit & query_hit
    union = int((hit | query_hit).sum())
    if union == 0 or not both.any():
        return -MISS_PENALTY_M
    shift = query_depth[both].mean() - d[both].mean()
    err = np.abs(d[both] + shift - query_depth[both])
    total = np.minimum(err, MISS_PENALTY_M).sum() \
        + MISS_PENALTY_M * (union - int(both.sum()))
    return -float(total / union)


def _spin_sweep(triangles, rotation, origin, query_depth, query_hit, cam,
                step_deg: float = 15.0):
    """Coarse search over spin about the object's own z axis (the DOF the
    viewpoint/in-plane stages leave ambiguous for near-axisymmetric shapes)."""
    best_rot = rotation
    best = _depth_score(triangles, rotation, origin, query_depth, query_hit, cam)
    for ang in np.arange(step_deg, 360.0, step_deg):
        spun = rotation @ _axis_rotation(np.array([0.0, 0.0, 1.0]), np.radians(ang))
        s = _depth_score(triangles, spun, origin, query_depth, query_hit, cam)
        if s > best:
            best_rot, best = spun, s
    return best_rot, best


def _refine_orientation(triangles, rotation, origin, query_depth, query_hit, cam):
    """Hill-climb over small rotations scored directly on metric depth:
    camera-frame tilts plus spin about the current object axis."""
    score = _depth_score(triangles, rotation, origin, query_depth, query_hit, cam)
    # Camera-z tilts are already resolved by the 1-degree in-plane search.
    cam_axes = (np.array([1.0, 0.0, 0.0]), np.array([0.0, 1.0, 0.0]))
    spin = np.array([0.0, 0.0, 1.0])
    for step in (8.0, 4.0, 2.0, 1.0):
        rad = np.radians(step)
        for _ in range(12):  # bounded walk per step size
            improved = False
            cands = [_axis_rotation(axis, sign * rad) @ rotation
                     for axis in cam_axes for sign in (1.0, -1.0)]
            cands += [rotation @ _axis_rotation(spin, sign * rad)
                      for sign in (1.0, -1.0)]
            for cand in cands:
                s = _depth_score(triangles, cand, origin, query_depth,
                                 query_hit, cam)
                if s > score + 1e-9:
                    rotation, score = cand, s
                    improved = True
            if not improved:
                break
    return rotation, score


def _refine_translation(triangles, rotation, origin, target_centroid, cam,
                        iterations: int = 2) -> np.ndarray:
    """Align the rendered surface centroid of the estimate with the observed
    one; cancels the viewpoint-dependent part of the centroid offset."""
    for _ in range(iterations):
        d = render_mesh_depth(triangles, rotation, origin, cam)
        ys, xs = np.nonzero(d > 0)
        if len(ys) < 8:
            break
        z = d[ys, xs]
        model_centroid = np.array([((xs + 0.5 - cam.cx) / cam.fx * z).mean(),
                                   ((ys + 0.5 - cam.cy) / cam.fy * z).mean(),
                                   z.mean()])
        step = target_centroid - model_centroid
        origin = origin + step
        if np.linalg.norm(step) < 1e-5:
            break
    return origin


def occlusion_fractions(scene: list[SceneObject], cam: CameraModel,
                        robot_base_pose: Pose6D | None = None,
                        resolution: int = 16) -> dict[int, float]:
    """Occlusion fraction for every object in one per-object render pass.

    Objects invisible even alone get value None-like NaN markers avoided:
    they raise in the single-object API; here they are reported as 1.0 only
    if covered, NaN when outside the frustum entirely.
    """
    _, masks = object_masks(scene, cam, robot_base_pose, resolution)
    out = {}
    for obj in scene:
        alone = (render_object(obj, cam, robot_base_pose, resolution).data > 0).sum()
        if alone == 0:
            out[obj.id] = float("nan")
        else:
            out[obj.id] = 1.0 - masks[obj.id].sum() / alone
    return out


def occlusion_fraction(target: SceneObject, scene: list[SceneObject],
                       cam: CameraModel, robot_base_pose: Pose6D | None = None,
                       resolution: int = 16) -> float:
    """1 - (visible pixels in the full scene) / (visible pixels alone)."""
    if all(o.id != target.id for o in scene):
        raise ValueError(f"target {target.id} not part of the scene")
    alone = (render_object(target, cam, robot_base_pose, resolution).data > 0).sum()
    if alone == 0:
        raise OcclusionError(f"object {target.id} is outside the camera frustum")
    _, masks = object_masks(scene, cam, robot_base_pose, resolution)
    return float(1.0 - masks[target.id].sum() / alone)
