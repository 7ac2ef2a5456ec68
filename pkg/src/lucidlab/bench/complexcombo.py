"""Complex object combinations: stacks, nesting, deliberate occlusion.

Randomized scenes exercise the perception stack where objects sit on top of
each other (up to four support levels), inside each other, or hidden behind
larger ones; the study reports per-axis rotation errors and the detection
drop beyond the occlusion failure threshold.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from lucidlab.geometry import Frame, Pose6D, pose_error, world_to_base
from lucidlab.perception.estimator import occlusion_fractions
from lucidlab.perception.noise import NoiseProfile, noisy_oracle
from lucidlab.bench.sweep import ExperimentConfig
from lucidlab.bench.tables import ErrorTable, write_csv
from lucidlab.scene import Scene, camera_look_at
from lucidlab.shapes import (DEFAULT_CAPACITY_ML, ObjectClass, SceneObject,
                             default_shape, footprint_radius, shape_height)
from lucidlab.stats import StatResult, mann_whitney_u

LOW_OCCLUSION = 0.30
HIGH_OCCLUSION = 0.60


@dataclass(frozen=True)
class PlacementInfo:
    object_id: int
    kind: str          # "table" | "stacked" | "nested" | "hidden"
    support_id: int | None
    level: int         # 1 = on the table


@dataclass(frozen=True)
class GeneratedScene:
    objects: tuple[SceneObject, ...]
    placements: tuple[PlacementInfo, ...]
    camera_eye: tuple[float, float, float]

    @property
    def max_level(self) -> int:
        return max(p.level for p in self.placements)


@dataclass(frozen=True)
class ComplexResult:
    table: ErrorTable
    axis_means_deg: tuple[float, float, float]
    axis_sds_deg: tuple[float, float, float]
    detection_rate_low_occ: float
    detection_rate_high_occ: float
    occlusion_detection_test: StatResult | None
    scenes: int

    def summary_json(self) -> str:
        doc = {
            "axis_means_deg": list(self.axis_means_deg),
            "axis_sds_deg": list(self.axis_sds_deg),
            "detection_rate_low_occlusion": self.detection_rate_low_occ,
            "detection_rate_high_occlusion": self.detection_rate_high_occ,
            "scenes": self.scenes,
        }
        if self.occlusion_detection_test is not None:
            t = self.occlusion_detection_test
            doc["occlusion_detection_test"] = {
                "test": t.test.value, "statistic": t.statistic,
                "p_value": t.p_value, "group_sizes": list(t.group_sizes)}
        return json.dumps(doc, indent=2, sort_keys=True)


def _footprints():
    return {cls: footprint_radius(default_shape(cls)) for cls in ObjectClass}


_FOOTPRINT = None
_HEIGHT = None


def _shape_tables():
    global _FOOTPRINT, _HEIGHT
    if _FOOTPRINT is None:
        _FOOTPRINT = _footprints()
        _HEIGHT = {cls: shape_height(default_shape(cls)) for cls in ObjectClass}
    return _FOOTPRINT, _HEIGHT


def _disjoint(xy, radius, placed) -> bool:
    return all(math.hypot(xy[0] - x, xy[1] - y) > radius + r + 0.005
               for x, y, r in placed)


def generate_scene(seed: int) -> GeneratedScene:
    """One randomized stacked/nested/occluded scene (deterministic per seed).

    Support levels never exceed four (table, rack, rack, vessel); objects on
    a common surface keep disjoint footprints; nested objects sit inside an
    open vessel; one small object may be hidden behind a large one along the
    camera direction.
    """
    rng = np.random.default_rng(np.random.SeedSequence((0xC0317, seed)))
    foot, height = _shape_tables()
    objects: list[SceneObject] = []
    placements: list[PlacementInfo] = []
    placed_xy: list[tuple[float, float, float]] = []
    eye = (float(-0.05 + rng.uniform(-0.03, 0.03)),
           float(rng.uniform(-0.06, 0.06)), float(rng.uniform(0.45, 0.6)))
    fwd_xy = np.array([0.33, 0.0]) - np.array(eye[:2])
    fwd_xy = fwd_xy / np.linalg.norm(fwd_xy)

    def sample_xy(radius):
        for _ in range(60):
            xy = (float(rng.uniform(0.24, 0.45)), float(rng.uniform(-0.18, 0.18)))
            if _disjoint(xy, radius, placed_xy):
                return xy
        return None

    def add(cls, pose, kind, support, level, liquid=0.0):
        oid = len(objects) + 1
        objects.append(SceneObject(id=oid, cls=cls, shape=default_shape(cls),
                                   pose=pose, liquid_volume=liquid,
                                   liquid_capacity=DEFAULT_CAPACITY_ML[cls]))
        placements.append(PlacementInfo(oid, kind, support, level))
        return objects[-1]

    # Level-1 rack (always present) plus optional second rack stacked on it.
    rack_cls = ObjectClass.RACK_25 if rng.uniform() < 0.5 else ObjectClass.RACK_6
    xy = sample_xy(foot[rack_cls])
    rack = add(rack_cls, Pose6D.from_translation((xy[0], xy[1], 0.0)),
               "table", None, 1)
    placed_xy.append((xy[0], xy[1], foot[rack_cls]))
    top_of = {rack.id: height[rack_cls]}

    stack_top = rack
    level = 1
    if rack_cls is ObjectClass.RACK_25 and rng.uniform() < 0.6:
        z = top_of[rack.id]
        second = add(ObjectClass.RACK_6,
                     Pose6D.from_translation((xy[0], xy[1], z)),
                     "stacked", rack.id, 2)
        top_of[second.id] = z + height[ObjectClass.RACK_6]
        stack_top, level = second, 2

    # A vessel on top of the stack (level 3) with a chance of a nested tube
    # inside it (level 4).
    beaker = None
    if rng.uniform() < 0.7:
        z = top_of[stack_top.id]
        beaker = add(ObjectClass.BEAKER,
                     Pose6D.from_translation((xy[0], xy[1], z)),
                     "stacked", stack_top.id, level + 1)
        top_of[beaker.id] = z + height[ObjectClass.BEAKER]
        if rng.uniform() < 0.6:
            add(ObjectClass.TEST_TUBE,
                Pose6D.from_translation((xy[0], xy[1], z + 0.0025)),
                "nested", beaker.id, level + 2)

    # Free-standing vessels on the table.
    for cls in (ObjectClass.FLASK, ObjectClass.GRADUATED_CYLINDER):
        if rng.uniform() < 0.7:
            cxy = sample_xy(foot[cls])
            if cxy is not None:
                add(cls, Pose6D.from_translation((cxy[0], cxy[1], 0.0)),
                    "table", None, 1)
                placed_xy.append((cxy[0], cxy[1], foot[cls]))

    # Tilted pipette on the table.
    if rng.uniform() < 0.6:
        cxy = sample_xy(0.06)
        if cxy is not None:
            tilt = rng.uniform(math.radians(15), math.radians(40))
            add(ObjectClass.PIPETTE,
                Pose6D.from_rpy(0.0, tilt, rng.uniform(0, 2 * math.pi),
                                xyz=(cxy[0], cxy[1], 0.0)),
                "table", None, 1)
            placed_xy.append((cxy[0], cxy[1], 0.06))

    # Hide a small object directly behind the rack stack from the camera.
    if rng.uniform() < 0.75:
        hide_cls = ObjectClass.TEST_TUBE if rng.uniform() < 0.6 \
            else ObjectClass.GRADUATED_CYLINDER
        gap = foot[rack_cls] + foot[hide_cls] + 0.012
        hxy = (xy[0] + float(fwd_xy[0]) * gap, xy[1] + float(fwd_xy[1]) * gap)
        if _disjoint(hxy, foot[hide_cls], placed_xy):
            add(hide_cls, Pose6D.from_translation((hxy[0], hxy[1], 0.0)),
                "hidden", rack.id, 1)
            placed_xy.append((hxy[0], hxy[1], foot[hide_cls]))

    return GeneratedScene(tuple(objects), tuple(placements), eye)


def validate_physical(gen: GeneratedScene) -> bool:
    """Pairwise non-penetration: disjoint footprints on a shared surface,
    exact stacking contact, or nesting inside an open vessel."""
    foot, height = _shape_tables()
    info = {p.object_id: p for p in gen.placements}
    if gen.max_level > 4:
        return False
    for a in gen.objects:
        for b in gen.objects:
            if a.id >= b.id:
                continue
            pa, pb = info[a.id], info[b.id]
            ra, rb = foot[a.cls], foot[b.cls]
            dx = float(np.hypot(*(a.pose.position[:2] - b.pose.position[:2])))
            za0, za1 = a.pose.position[2], a.pose.position[2] + height[a.cls]
            zb0, zb1 = b.pose.position[2], b.pose.position[2] + height[b.cls]
            overlap_z = min(za1, zb1) - max(za0, zb0) > 1e-9
            overlap_xy = dx < ra + rb
            if not (overlap_z and overlap_xy):
                continue
            related = pb.support_id == a.id or pa.support_id == b.id \
                or pb.kind == "nested" or pa.kind == "nested"
            if not related:
                return False
    return True


def run_complex_combinations(config: ExperimentConfig,
                             profile: NoiseProfile,
                             out_dir=None,
                             camera_model=None) -> ComplexResult:
    """Measure rotation errors and detection vs occlusion over generated
    scenes; detection rates are compared across the occlusion bins with the
    in-repo Mann-Whitney test."""
    from lucidlab.scene import make_default_scene

    base_scene = make_default_scene()
    cam0 = camera_model if camera_model is not None else base_scene.camera
    table = ErrorTable()
    det_low, det_high = [], []

    for si in range(config.scenes):
        gen = generate_scene(config.seed * 100003 + si)
        scene_objs = list(gen.objects)
        cam_pose = camera_look_at(gen.camera_eye, (0.33, 0.0, 0.05), Frame.WORLD)
        cam = type(cam0)(fx=cam0.fx, fy=cam0.fy, cx=cam0.cx, cy=cam0.cy,
                         width=cam0.width, height=cam0.height,
                         extrinsics=world_to_base(cam_pose,
                                                  Pose6D.identity(Frame.WORLD)))
        base = Pose6D.identity(Frame.WORLD)
        occ = occlusion_fractions(scene_objs, cam, base)
        rng = np.random.default_rng(np.random.SeedSequence(
            (config.seed, 2, si)))
        ests = noisy_oracle(scene_objs, cam, profile, base, rng=rng,
                            occlusions=occ)
        for obj, est in zip(scene_objs, ests):
            o = occ[obj.id]
            if not math.isnan(o):
                if o < LOW_OCCLUSION:
                    det_low.append(1.0 if est.detected else 0.0)
                elif o > HIGH_OCCLUSION:
                    det_high.append(1.0 if est.detected else 0.0)
            if not est.detected:
                table.add("complex", obj.cls, detected=False)
                continue
            truth = world_to_base(obj.pose, base)
            err = pose_error(est.pose, truth, obj.shape.symmetry)
            table.add("complex", obj.cls, detected=True, pos_cm=err.position_cm,
                      rot_deg=(err.roll_deg, err.pitch_deg, err.yaw_deg),
                      total_deg=err.angle_deg)

    axes = [table.samples(kind=k) for k in ("roll", "pitch", "yaw")]
    means = tuple(float(a.mean()) if len(a) else float("nan") for a in axes)
    sds = tuple(float(a.std()) if len(a) else float("nan") for a in axes)
    test = None
    if det_low and det_high and (set(det_low) | set(det_high)) != {1.0}:
        test = mann_whitney_u(det_high, det_low)
    result = ComplexResult(
        table=table, axis_means_deg=means, axis_sds_deg=sds,
        detection_rate_low_occ=float(np.mean(det_low)) if det_low else float("nan"),
        detection_rate_high_occ=float(np.mean(det_high)) if det_high else float("nan"),
        occlusion_detection_test=test, scenes=config.scenes)

    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "complex_table.csv").write_text(write_csv(table), encoding="utf-8")
        (out / "complex_summary.json").write_text(result.summary_json(),
                                                  encoding="utf-8")
    return result
