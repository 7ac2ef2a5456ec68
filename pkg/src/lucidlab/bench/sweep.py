"""Workspace sweeps: camera height x pitch at close range, and camera
distance at fixed height, with the accompanying nonparametric tests."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from lucidlab.geometry import CameraModel, Frame, Pose6D, pose_error, world_to_base
from lucidlab.perception.estimator import occlusion_fractions
from lucidlab.perception.noise import NoiseProfile, noisy_oracle
from lucidlab.bench.tables import ErrorTable, write_csv
from lucidlab.scene import Scene, camera_look_at
from lucidlab.shapes import ObjectClass, TRANSLUCENT_CLASSES, footprint_radius
from lucidlab.stats import StatResult, kruskal_wallis, mann_whitney_u

SMALL_TRANSLUCENT = (ObjectClass.PIPETTE, ObjectClass.TEST_TUBE)
LARGE_TRANSLUCENT = (ObjectClass.FLASK, ObjectClass.BEAKER,
                     ObjectClass.GRADUATED_CYLINDER)


@dataclass(frozen=True)
class ExperimentConfig:
    """Sweep geometry (cm/degrees as configured) and trial counts."""

    heights_cm: tuple[float, ...] = (50.0, 45.0, 40.0)
    pitches_deg: tuple[float, ...] = (40.0, 45.0, 50.0, 55.0, 60.0, 65.0)
    distances_cm: tuple[float, ...] = (9.5, 13.0, 24.0, 33.0, 57.0, 65.0, 74.0)
    close_distance_cm: float = 9.5
    fixed_height_cm: float = 45.0
    trials_per_cell: int = 40
    scenes: int = 150   # complex-combination study
    seed: int = 0

    def __post_init__(self):
        if not (self.heights_cm and self.pitches_deg and self.distances_cm):
            raise ValueError("sweep lists must be non-empty")
        if self.trials_per_cell < 1:
            raise ValueError("trials_per_cell must be >= 1")


@dataclass(frozen=True)
class SweepResult:
    height_table: ErrorTable
    distance_table: ErrorTable
    stats: dict[str, StatResult]
    flagged_cells: tuple[str, ...]
    overall_position_mean_cm: float
    overall_rotation_mean_deg: float
    height_position_means_cm: dict[float, float]

    def csv_documents(self) -> dict[str, str]:
        return {"sweep_height.csv": write_csv(self.height_table),
                "sweep_distance.csv": write_csv(self.distance_table)}

    def stats_json(self) -> str:
        doc = {name: {"test": r.test.value, "statistic": r.statistic,
                      "p_value": r.p_value, "group_sizes": list(r.group_sizes)}
               for name, r in sorted(self.stats.items())}
        return json.dumps(doc, indent=2, sort_keys=True)


def _board_frame(scene: Scene):
    """(near edge x, board center) of the object layout."""
    xs, ys = [], []
    edge = math.inf
    for o in scene.objects:
        xs.append(o.pose.position[0])
        ys.append(o.pose.position[1])
        edge = min(edge, o.pose.position[0] - footprint_radius(o.shape))
    center = np.array([float(np.mean(xs)), float(np.mean(ys)), 0.05])
    return float(edge), center


def _camera_with_extrinsics(scene: Scene, pose_world: Pose6D) -> CameraModel:
    cam = scene.camera
    extr = world_to_base(pose_world, scene.robot_base_pose)
    return CameraModel(fx=cam.fx, fy=cam.fy, cx=cam.cx, cy=cam.cy,
                       width=cam.width, height=cam.height, extrinsics=extr)


def _pitched_camera(scene: Scene, eye, pitch_deg: float) -> CameraModel:
    """Camera at eye, optical axis pitched down from horizontal (+x heading)."""
    p = math.radians(pitch_deg)
    fwd = np.array([math.cos(p), 0.0, -math.sin(p)])
    return _camera_with_extrinsics(
        scene, camera_look_at(eye, np.asarray(eye) + fwd, Frame.WORLD))


def _aimed_camera(scene: Scene, eye, target) -> CameraModel:
    return _camera_with_extrinsics(scene, camera_look_at(eye, target, Frame.WORLD))


_CODEBOOK_CACHE: dict[tuple, object] = {}


def _class_codebook(obj, spacing=15.0):
    key = (obj.cls, spacing)
    if key not in _CODEBOOK_CACHE:
        from lucidlab.perception.codebook import build_codebook
        _CODEBOOK_CACHE[key] = build_codebook(obj.shape, spacing, 0.40, obj.cls)
    return _CODEBOOK_CACHE[key]


def _run_cell(scene: Scene, cam: CameraModel, profile: NoiseProfile,
              condition: str, table: ErrorTable, trials: int,
              seed_key: tuple, estimator: str = "oracle") -> bool:
    """Accumulate `trials` oracle draws for one camera placement.

    Returns False (flagged) when no object is visible from the placement.
    Occlusions are rendered once; each trial derives its own generator from
    (seed, cell index, trial index), deterministic regardless of schedule.
    In codebook mode the full estimation pipeline runs instead of the noise
    oracle (one deterministic pass per cell).
    """
    objects = list(scene.objects)
    occ = occlusion_fractions(objects, cam, scene.robot_base_pose)
    if all(math.isnan(v) for v in occ.values()):
        return False
    truths = {o.id: world_to_base(o.pose, scene.robot_base_pose) for o in objects}
    classes = {o.id: o.cls for o in objects}
    symmetries = {o.id: o.shape.symmetry for o in objects}

    def record(est):
        cls = classes[est.object_id]
        if not est.detected:
            table.add(condition, cls, detected=False)
            return
        err = pose_error(est.pose, truths[est.object_id],
                         symmetries[est.object_id])
        table.add(condition, cls, detected=True, pos_cm=err.position_cm,
                  rot_deg=(err.roll_deg, err.pitch_deg, err.yaw_deg),
                  total_deg=err.angle_deg)

    if estimator == "codebook":
        from lucidlab.perception.estimator import estimate_pose
        from lucidlab.perception.render import object_masks
        depth, masks = object_masks(objects, cam, scene.robot_base_pose)
        for obj in objects:
            record(estimate_pose(depth, masks[obj.id], _class_codebook(obj),
                                 obj.id))
        return True

    for trial in range(trials):
        rng = np.random.default_rng(np.random.SeedSequence(seed_key + (trial,)))
        for est in noisy_oracle(objects, cam, profile, scene.robot_base_pose,
                                rng=rng, occlusions=occ):
            record(est)
    return True


def run_workspace_sweep(config: ExperimentConfig, scene: Scene,
                        profile: NoiseProfile | None = None,
                        out_dir=None, estimator: str = "oracle") -> SweepResult:
    """Both camera studies plus the class/group rank tests; CSV on request.

    estimator="codebook" replaces the calibrated oracle with the full
    render/estimate pipeline (deterministic, one pass per cell).
    """
    if profile is None:
        profile = scene.noise_profile
    if estimator not in ("oracle", "codebook"):
        raise ValueError("estimator must be 'oracle' or 'codebook'")
    edge, center = _board_frame(scene)
    height_table = ErrorTable()
    distance_table = ErrorTable()
    flagged = []

    for hi, h in enumerate(config.heights_cm):
        for pi, pitch in enumerate(config.pitches_deg):
            eye = (edge - config.close_distance_cm / 100.0, float(center[1]),
                   h / 100.0)
            cam = _pitched_camera(scene, eye, pitch)
            cond = f"h{h:g}_p{pitch:g}"
            ok = _run_cell(scene, cam, profile, cond, height_table,
                           config.trials_per_cell, (config.seed, 0, hi, pi),
                           estimator)
            if not ok:
                flagged.append(cond)

    for di, d in enumerate(config.distances_cm):
        eye = (edge - d / 100.0, float(center[1]), config.fixed_height_cm / 100.0)
        cam = _aimed_camera(scene, eye, center)
        cond = f"d{d:g}"
        ok = _run_cell(scene, cam, profile, cond, distance_table,
                       config.trials_per_cell, (config.seed, 1, di), estimator)
        if not ok:
            flagged.append(cond)

    stats: dict[str, StatResult] = {}
    class_groups = [height_table.samples(cls=c, kind="pos") for c in ObjectClass]
    if all(len(g) > 0 for g in class_groups):
        try:
            stats["position_across_objects"] = kruskal_wallis(class_groups)
        except ValueError:
            pass
    small = np.concatenate([height_table.samples(cls=c, kind="pos")
                            for c in SMALL_TRANSLUCENT])
    large = np.concatenate([height_table.samples(cls=c, kind="pos")
                            for c in LARGE_TRANSLUCENT])
    if len(small) and len(large):
        stats["small_vs_large_translucent"] = mann_whitney_u(small, large)
    translucent = np.concatenate([distance_table.samples(cls=c, kind="pos")
                                  for c in TRANSLUCENT_CLASSES])
    opaque = np.concatenate([distance_table.samples(cls=c, kind="pos")
                             for c in (ObjectClass.RACK_6, ObjectClass.RACK_25)])
    if len(translucent) and len(opaque):
        stats["translucent_vs_opaque_position"] = mann_whitney_u(translucent, opaque)
        stats["translucent_vs_opaque_rotation"] = mann_whitney_u(
            np.concatenate([distance_table.samples(cls=c, kind="rot")
                            for c in TRANSLUCENT_CLASSES]),
            np.concatenate([distance_table.samples(cls=c, kind="rot")
                            for c in (ObjectClass.RACK_6, ObjectClass.RACK_25)]))

    pos_all = distance_table.samples(kind="pos")
    rot_all = distance_table.samples(kind="rot")
    height_means = {}
    for h in config.heights_cm:
        vals = np.concatenate([height_table.samples(condition=f"h{h:g}_p{p:g}",
                                                    kind="pos")
                               for p in config.pitches_deg])
        height_means[h] = float(vals.mean()) if len(vals) else float("nan")

    result = SweepResult(
        height_table=height_table, distance_table=distance_table, stats=stats,
        flagged_cells=tuple(flagged),
        overall_position_mean_cm=float(pos_all.mean()) if len(pos_all) else float("nan"),
        overall_rotation_mean_deg=float(rot_all.mean()) if len(rot_all) else float("nan"),
        height_position_means_cm=height_means)

    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        for name, text in result.csv_documents().items():
            (out / name).write_text(text, encoding="utf-8")
        (out / "sweep_stats.json").write_text(result.stats_json(), encoding="utf-8")
    return result
