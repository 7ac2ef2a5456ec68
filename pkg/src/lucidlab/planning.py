"""Task formation and collision-checked trajectory generation.

Keypoint plans are synthesized from perceived poses: the standard 5-point
pick-and-place sequence and the 6-point liquid-transfer sequence.  Planned
paths are straight joint-space segments checked against dead-zone capsules
around non-manipulated objects, with automatic lift waypoints inserted on
collision and trapezoidal velocity timing.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np

from lucidlab.geometry import Frame, Pose6D, compose, matrix_to_quat
from lucidlab.kinematics import GRIPPER_MAX_WIDTH, fk, ik, select_solution
from lucidlab.perception.types import PerceptionEstimate
from lucidlab.shapes import (SceneObject, _cavity_segments, cavity_height,
                             height_for_volume, rim_radius, shape_height,
                             tessellate, width_at_height)

PICK_PLACE_NAMES = ("PreGrab", "Grab", "Pick", "Place", "PostPlace")
DISPENSE_NAMES = ("AlignPipette", "GraspPipette", "AboveSource", "DrawLiquid",
                  "AboveTarget", "PourLiquid")

TCP_SAMPLE_SPACING = 0.005  # m, collision-check resolution along the path

# Home configuration: TCP at (0.25, 0, 0.30) over the board, tool pointing down.
HOME_Q = np.array([0.46609358167880144, -1.4683755123334823, -0.9716992814487342,
                   -2.2723141866024728, 1.5707963267948968, -1.1047027451160951])


class PlanningError(ValueError):
    """Base class for task-formation and trajectory failures."""


class ObjectNotDetected(PlanningError):
    pass


class GraspWidthError(PlanningError):
    pass


class NeckUnavailable(PlanningError):
    pass


class VesselBottomError(PlanningError):
    pass


class IKFailure(PlanningError):
    def __init__(self, keypoint: str):
        super().__init__(f"no IK solution for keypoint {keypoint!r}")
        self.keypoint = keypoint


class CollisionFailure(PlanningError):
    def __init__(self, zone_id: int):
        super().__init__(f"path collides with dead zone of object {zone_id} "
                         "even after lift insertion")
        self.zone_id = zone_id


class TaskKind(Enum):
    PICK_PLACE = "pick_place"
    DISPENSE = "dispense"


@dataclass(frozen=True)
class TaskSpec:
    """What to manipulate; distances in meters, volumes in ml."""

    kind: TaskKind
    pick_id: int | None = None
    place_pose: Pose6D | None = None
    pipette_id: int | None = None
    source_id: int | None = None
    target_id: int | None = None
    clearance: float = 0.05
    approach_offset: float = 0.10
    immersion_margin: float = 0.01
    pour_depth: float = 0.02
    draw_volume_ml: float = 5.0
    grasp_height_frac: float = 0.5


@dataclass(frozen=True)
class GripperAction:
    kind: str  # "none" | "open" | "close"
    width: float | None = None

    @classmethod
    def none(cls) -> "GripperAction":
        return cls("none")

    @classmethod
    def open(cls) -> "GripperAction":
        return cls("open", GRIPPER_MAX_WIDTH)

    @classmethod
    def close(cls, width: float) -> "GripperAction":
        return cls("close", width)


@dataclass(frozen=True)
class Keypoint:
    name: str
    tcp_pose: Pose6D
    gripper: GripperAction = field(default_factory=GripperAction.none)
    dwell: float = 0.5
    tip_target: tuple[float, float, float] | None = None


@dataclass(frozen=True)
class TransferPlan:
    pipette_id: int
    source_id: int
    target_id: int
    volume_ml: float
    draw_keypoint: str = "DrawLiquid"
    pour_keypoint: str = "PourLiquid"


@dataclass(frozen=True)
class KeypointPlan:
    kind: TaskKind
    keypoints: tuple[Keypoint, ...]
    grasp_object_id: int | None = None
    grasp_width: float | None = None
    grasp_transform: Pose6D | None = None  # object pose in the TCP frame
    grasp_shape: object | None = None      # ShapeModel of the grasped object
    transfer: TransferPlan | None = None
    warnings: tuple[str, ...] = ()

    def __post_init__(self):
        names = [k.name for k in self.keypoints]
        if len(set(names)) != len(names):
            raise PlanningError("keypoint names must be unique")
        expected = PICK_PLACE_NAMES if self.kind is TaskKind.PICK_PLACE \
            else DISPENSE_NAMES
        if tuple(names) != expected:
            raise PlanningError(f"{self.kind.value} plan requires keypoints "
                                f"{expected}, got {tuple(names)}")

    def keypoint(self, name: str) -> Keypoint:
        for k in self.keypoints:
            if k.name == name:
                return k
        raise KeyError(name)


@dataclass(frozen=True)
class DeadZone:
    """Vertical capsule around a non-manipulated object (base frame)."""

    object_id: int
    base: tuple[float, float, float]  # capsule axis bottom point
    radius: float
    height: float

    def penetration(self, points: np.ndarray) -> np.ndarray:
        """Penetration depth (m) of each point; <=0 means outside/boundary."""
        p = np.atleast_2d(points)
        dz = np.clip(p[:, 2], self.base[2], self.base[2] + self.height)
        closest = np.column_stack([np.full(len(p), self.base[0]),
                                   np.full(len(p), self.base[1]), dz])
        return self.radius - np.linalg.norm(p - closest, axis=1)


@dataclass(frozen=True)
class TrajectoryPoint:
    q: np.ndarray
    t: float
    gripper_width: float = math.nan  # NaN = unchanged

    def __post_init__(self):
        object.__setattr__(self, "q", np.asarray(self.q, dtype=np.float64))


@dataclass(frozen=True)
class JointTrajectory:
    points: tuple[TrajectoryPoint, ...]
    marks: tuple[tuple[str, float], ...] = ()   # (keypoint name, arrival time)
    zones: tuple[DeadZone, ...] = ()
    max_step: float = 0.12  # rad, bound on consecutive |dq|_inf

    def __post_init__(self):
        ts = [p.t for p in self.points]
        if any(b <= a for a, b in zip(ts, ts[1:])):
            raise PlanningError("trajectory times must be strictly increasing")
        for a, b in zip(self.points, self.points[1:]):
            if np.abs(b.q - a.q).max() > self.max_step + 1e-9:
                raise PlanningError("joint step bound exceeded")

    @property
    def duration(self) -> float:
        return self.points[-1].t if self.points else 0.0


# ---------------------------------------------------------------------------
# grasp frame construction

def _estimates_by_id(perceived) -> dict[int, PerceptionEstimate]:
    return {e.object_id: e for e in perceived}


def _catalog_by_id(catalog) -> dict[int, SceneObject]:
    return {o.id: o for o in catalog}


def _require_detected(est_map, oid: int, role: str) -> PerceptionEstimate:
    est = est_map.get(oid)
    if est is None or not est.detected:
        raise ObjectNotDetected(f"{role} object {oid} was not detected")
    return est


def grasp_frame(pose: Pose6D, shape, frac: float = 0.5,
                approach_turn: float = 0.0) -> tuple[Pose6D, float]:
    """Side-grasp TCP pose and required width for an object at `pose`.

    The approach axis (TCP z) is horizontal-ish and perpendicular to the
    object's own z axis; the closing axis (TCP x) is perpendicular to both,
    which leaves the gripper palm axis parallel to the object axis.
    approach_turn rotates the approach around the object axis (radians),
    giving alternative grasp candidates when the default is unreachable.

    The reference approach direction is a fixed workspace direction (+x), so
    translating the object translates the grasp frame without reorienting it.
    """
    axis = pose.rotation[:, 2]
    grasp_h = frac * cavity_height_or_height(shape)
    point = pose.position + axis * grasp_h
    width = width_at_height(shape, grasp_h)
    if width > GRIPPER_MAX_WIDTH:
        raise GraspWidthError(f"required width {width * 1000:.1f} mm exceeds "
                              f"gripper max {GRIPPER_MAX_WIDTH * 1000:.0f} mm")

    h0 = np.array([1.0, 0.0, 0.0])
    z_tcp = h0 - np.dot(h0, axis) * axis
    nz = np.linalg.norm(z_tcp)
    if nz < 1e-6:
        z_tcp = np.cross(axis, np.array([0.0, 0.0, 1.0]))
        nz = np.linalg.norm(z_tcp)
        if nz < 1e-6:
            z_tcp = np.array([1.0, 0.0, 0.0])
            nz = 1.0
    z_tcp = z_tcp / nz
    if approach_turn != 0.0:
        c, s = math.cos(approach_turn), math.sin(approach_turn)
        perp = np.cross(axis, z_tcp)
        z_tcp = c * z_tcp + s * perp
    x_tcp = np.cross(z_tcp, axis)
    x_tcp = x_tcp / np.linalg.norm(x_tcp)
    y_tcp = np.cross(z_tcp, x_tcp)
    rot = np.column_stack([x_tcp, y_tcp, z_tcp])
    return Pose6D(point, matrix_to_quat(rot), pose.frame), width


APPROACH_TURNS = (0.0, math.pi / 3, -math.pi / 3, 2 * math.pi / 3,
                  -2 * math.pi / 3, math.pi)


def _first_reachable(candidates, robot):
    """First candidate plan whose every keypoint has an IK solution."""
    first_failure = None
    for plan in candidates:
        if robot is None:
            return plan
        failed = None
        for kp in plan.keypoints:
            if not ik(kp.tcp_pose, robot.dh):
                failed = kp.name
                break
        if failed is None:
            return plan
        if first_failure is None:
            first_failure = failed
    raise IKFailure(first_failure or "Grab")


def cavity_height_or_height(shape) -> float:
    try:
        return cavity_height(shape)
    except Exception:
        return shape_height(shape)


def _raised(pose: Pose6D, dz: float) -> Pose6D:
    return Pose6D(pose.position + np.array([0.0, 0.0, dz]), pose.quat, pose.frame)


# ---------------------------------------------------------------------------
# task formation

def form_pick_place(perceived, spec: TaskSpec, catalog, robot=None) -> KeypointPlan:
    """Pre-Grab / Grab / Pick / Place / PostPlace from the perceived pose.

    When a robot model is supplied, grasp approach candidates are filtered
    for IK reachability of every keypoint.
    """
    if spec.kind is not TaskKind.PICK_PLACE:
        raise PlanningError("spec kind must be PICK_PLACE")
    est_map = _estimates_by_id(perceived)
    cat = _catalog_by_id(catalog)
    if spec.pick_id not in cat:
        raise PlanningError(f"pick object {spec.pick_id} not in catalog")
    est = _require_detected(est_map, spec.pick_id, "pick")
    obj = cat[spec.pick_id]
    if spec.place_pose is None:
        raise PlanningError("pick-and-place requires a place pose")

    def build(turn: float) -> KeypointPlan:
        grab, width = grasp_frame(est.pose, obj.shape, spec.grasp_height_frac, turn)
        grasp_tf = compose(grab.inverse(), est.pose.retag(grab.frame)) \
            .retag(Frame.OBJECT)
        place_tcp = compose(spec.place_pose, grasp_tf.inverse())
        kps = (
            Keypoint("PreGrab", _raised(grab, spec.approach_offset),
                     GripperAction.open()),
            Keypoint("Grab", grab, GripperAction.close(width)),
            Keypoint("Pick", _raised(grab, spec.clearance)),
            Keypoint("Place", place_tcp, GripperAction.open()),
            Keypoint("PostPlace", _raised(place_tcp, spec.approach_offset)),
        )
        return KeypointPlan(kind=TaskKind.PICK_PLACE, keypoints=kps,
                            grasp_object_id=spec.pick_id, grasp_width=width,
                            grasp_transform=grasp_tf, grasp_shape=obj.shape)

    return _first_reachable((build(t) for t in APPROACH_TURNS), robot)


def _neck_center_world(est: PerceptionEstimate, obj: SceneObject) -> np.ndarray:
    rim_z = _cavity_segments(obj.shape)[-1][1]
    return est.pose.transform_point((0.0, 0.0, rim_z))


def form_dispense(perceived, spec: TaskSpec, catalog, robot=None) -> KeypointPlan:
    """Six keypoints: align with the tilted pipette, grasp it, hover over the
    source vessel, immerse to draw, hover over the target, lower to pour.

    Keypoints 3-6 place the pipette TIP (through the grasp transform) at the
    computed points over/inside the vessel necks.
    """
    if spec.kind is not TaskKind.DISPENSE:
        raise PlanningError("spec kind must be DISPENSE")
    est_map = _estimates_by_id(perceived)
    cat = _catalog_by_id(catalog)

    pip_est = _require_detected(est_map, spec.pipette_id, "pipette")
    src_est = _require_detected(est_map, spec.source_id, "source vessel")
    tgt_est = _require_detected(est_map, spec.target_id, "target vessel")
    for est, role in ((src_est, "source"), (tgt_est, "target")):
        if est.neck is None:
            raise NeckUnavailable(f"{role} vessel {est.object_id} has no neck "
                                  "prediction")

    pipette = cat[spec.pipette_id]
    source = cat[spec.source_id]
    target = cat[spec.target_id]

    src_neck = _neck_center_world(src_est, source)
    tgt_neck = _neck_center_world(tgt_est, target)
    src_liquid = src_est.liquid_height
    if src_liquid is None:
        raise NeckUnavailable("source vessel estimate lacks a liquid height")

    src_bottom_z = float(src_est.pose.position[2])
    src_rim_z = float(src_neck[2])
    tgt_rim_z = float(tgt_neck[2])
    tgt_bottom_z = float(tgt_est.pose.position[2])

    draw_tip_z = src_bottom_z + src_liquid - spec.immersion_margin
    if draw_tip_z <= src_bottom_z:
        raise VesselBottomError("immersion would hit the source vessel bottom")
    pour_tip_z = tgt_rim_z - spec.pour_depth
    if pour_tip_z <= tgt_bottom_z:
        raise VesselBottomError("pour depth reaches the target vessel bottom")
    tip_body_radius = pipette.shape.parts[0].primitive.radius
    for vessel, role in ((source, "source"), (target, "target")):
        if rim_radius(vessel.shape) <= tip_body_radius:
            raise VesselBottomError(f"pipette does not fit the {role} neck")

    tips = {
        "AboveSource": (src_neck[0], src_neck[1], src_rim_z + spec.clearance),
        "DrawLiquid": (src_neck[0], src_neck[1], draw_tip_z),
        "AboveTarget": (tgt_neck[0], tgt_neck[1], tgt_rim_z + spec.clearance),
        "PourLiquid": (tgt_neck[0], tgt_neck[1], pour_tip_z),
    }

    def build(turn: float) -> KeypointPlan:
        grab, width = grasp_frame(pip_est.pose, pipette.shape,
                                  spec.grasp_height_frac, turn)
        grasp_tf = compose(grab.inverse(), pip_est.pose.retag(grab.frame)) \
            .retag(Frame.OBJECT)
        align = Pose6D(grab.position - grab.rotation[:, 2] * spec.approach_offset,
                       grab.quat, grab.frame)

        def tcp_for_tip(tip_xyz) -> Pose6D:
            upright = Pose6D(np.asarray(tip_xyz), np.array([1.0, 0.0, 0.0, 0.0]),
                             pip_est.pose.frame)
            return compose(upright, grasp_tf.inverse())

        kps = (
            Keypoint("AlignPipette", align, GripperAction.open()),
            Keypoint("GraspPipette", grab, GripperAction.close(width)),
            Keypoint("AboveSource", tcp_for_tip(tips["AboveSource"]),
                     tip_target=tips["AboveSource"]),
            Keypoint("DrawLiquid", tcp_for_tip(tips["DrawLiquid"]),
                     dwell=1.0, tip_target=tips["DrawLiquid"]),
            Keypoint("AboveTarget", tcp_for_tip(tips["AboveTarget"]),
                     tip_target=tips["AboveTarget"]),
            Keypoint("PourLiquid", tcp_for_tip(tips["PourLiquid"]),
                     dwell=1.0, tip_target=tips["PourLiquid"]),
        )
        return KeypointPlan(kind=TaskKind.DISPENSE, keypoints=kps,
                            grasp_object_id=spec.pipette_id, grasp_width=width,
                            grasp_transform=grasp_tf, grasp_shape=pipette.shape,
                            transfer=TransferPlan(spec.pipette_id, spec.source_id,
                                                  spec.target_id,
                                                  spec.draw_volume_ml))

    return _first_reachable((build(t) for t in APPROACH_TURNS), robot)


def plan_to_dict(plan: KeypointPlan) -> dict:
    """JSON-friendly view of a keypoint plan (poses as [x,y,z,qw,qx,qy,qz])."""
    doc = {
        "kind": plan.kind.value,
        "grasp_object_id": plan.grasp_object_id,
        "grasp_width_m": plan.grasp_width,
        "warnings": list(plan.warnings),
        "keypoints": [{
            "name": kp.name,
            "tcp_pose": [*map(float, kp.tcp_pose.position),
                         *map(float, kp.tcp_pose.quat)],
            "gripper": kp.gripper.kind,
            "gripper_width_m": kp.gripper.width,
            "dwell_s": kp.dwell,
            "tip_target": None if kp.tip_target is None
            else [float(v) for v in kp.tip_target],
        } for kp in plan.keypoints],
    }
    if plan.transfer is not None:
        doc["transfer"] = {
            "pipette_id": plan.transfer.pipette_id,
            "source_id": plan.transfer.source_id,
            "target_id": plan.transfer.target_id,
            "volume_ml": plan.transfer.volume_ml,
        }
    return doc


# ---------------------------------------------------------------------------
# dead zones

def dead_zones(perceived, active_ids, catalog,
               margin: float = 0.02, clearance: float = 0.05) -> list[DeadZone]:
    """One capsule per detected, non-active object (undetected objects are
    silently skipped; use dead_zones_with_warnings to surface them)."""
    zones, _ = dead_zones_with_warnings(perceived, active_ids, catalog,
                                        margin, clearance)
    return zones


def dead_zones_with_warnings(perceived, active_ids, catalog,
                             margin: float = 0.02, clearance: float = 0.05):
    cat = _catalog_by_id(catalog)
    zones, warnings = [], []
    for est in perceived:
        if est.object_id in active_ids:
            continue
        if not est.detected:
            warnings.append(f"object {est.object_id} undetected: no dead zone")
            continue
        obj = cat.get(est.object_id)
        if obj is None:
            warnings.append(f"object {est.object_id} not in catalog: no dead zone")
            continue
        verts = tessellate(obj.shape, 8).transformed(est.pose).vertices
        footprint = float(np.hypot(verts[:, 0] - est.pose.position[0],
                                   verts[:, 1] - est.pose.position[1]).max())
        height = float(verts[:, 2].max() - est.pose.position[2])
        zones.append(DeadZone(object_id=est.object_id,
                              base=tuple(map(float, est.pose.position)),
                              radius=footprint + margin,
                              height=height + clearance))
    return zones, warnings


# ---------------------------------------------------------------------------
# collision checking

@dataclass(frozen=True)
class Violation:
    sample_index: int
    zone_id: int
    penetration: float


def _held_points(grasp_transform: Pose6D, shape) -> np.ndarray:
    """Sample points of the held object in the TCP frame."""
    mesh = tessellate(shape, 8)
    return grasp_transform.transform_points(mesh.vertices)


def check_collision(tcp_path, held, zones) -> list[Violation]:
    """Violations of dead zones along a sampled TCP path.

    tcp_path: sequence of Pose6D or (N,3) positions; held: optional
    (ShapeModel, grasp transform) carried along the path.  Boundary contact
    (penetration exactly 0) is not a violation.
    """
    if not zones:
        return []
    poses = list(tcp_path)
    positions = []
    rotations = []
    for p in poses:
        if isinstance(p, Pose6D):
            positions.append(p.position)
            rotations.append(p.rotation)
        else:
            positions.append(np.asarray(p, dtype=np.float64))
            rotations.append(None)
    held_local = None
    if held is not None:
        shape, grasp_tf = held
        held_local = _held_points(grasp_tf, shape)

    out = []
    for i, (pos, rot) in enumerate(zip(positions, rotations)):
        pts = [pos]
        if held_local is not None and rot is not None:
            pts.append(held_local @ rot.T + pos)
        pts = np.vstack(pts)
        for z in zones:
            pen = z.penetration(pts).max()
            if pen > 1e-12:  # boundary contact is not a violation
                out.append(Violation(i, z.object_id, float(pen)))
    return out


# ---------------------------------------------------------------------------
# trajectory generation

def _segment_duration(delta: float, vmax: float, amax: float) -> float:
    if delta <= 0.0:
        return 0.0
    if delta >= vmax * vmax / amax:
        return delta / vmax + vmax / amax
    return 2.0 * math.sqrt(delta / amax)


def _trapezoid_position(tau: float, delta: float, vmax: float, amax: float) -> float:
    """Distance traveled along a trapezoidal/triangular profile at time tau."""
    if delta <= 0.0:
        return 0.0
    total = _segment_duration(delta, vmax, amax)
    tau = min(max(tau, 0.0), total)
    if delta >= vmax * vmax / amax:
        t_acc = vmax / amax
        if tau < t_acc:
            return 0.5 * amax * tau * tau
        if tau < total - t_acc:
            return 0.5 * vmax * t_acc + vmax * (tau - t_acc)
        rem = total - tau
        return delta - 0.5 * amax * rem * rem
    t_half = total / 2.0
    if tau < t_half:
        return 0.5 * amax * tau * tau
    rem = total - tau
    return delta - 0.5 * amax * rem * rem


def _sample_segment_tcp(qa, qb, dh, spacing=TCP_SAMPLE_SPACING):
    """Poses along the straight joint-space segment, ends included, with
    consecutive TCP positions no farther than `spacing` apart."""
    n = 8
    while True:
        s = np.linspace(0.0, 1.0, n + 1)
        poses = [fk(qa + si * (qb - qa), dh) for si in s]
        pts = np.array([p.position for p in poses])
        gaps = np.linalg.norm(np.diff(pts, axis=0), axis=1)
        if gaps.max() <= spacing or n >= 4096:
            return poses
        n *= 2


def plan_trajectory(plan: KeypointPlan, zones, start, robot) -> JointTrajectory:
    """Collision-checked, trapezoid-timed joint trajectory through the plan.

    Straight joint-space motion between keypoints; when a segment sweeps
    through a dead zone, lift waypoints above the zones are inserted and the
    segment is re-checked (failure raises CollisionFailure with the zone id).
    """
    dh = robot.dh
    held_shape = None  # set per segment once the grasp closes

    # IK for every keypoint with continuity selection.
    q_prev = np.asarray(start, dtype=np.float64)
    waypoints: list[tuple[str, np.ndarray, Keypoint | None]] = \
        [("start", q_prev, None)]
    kp_solutions = {}
    for kp in plan.keypoints:
        sols = ik(kp.tcp_pose, dh, wrist_hint=float(q_prev[3]))
        if not sols:
            raise IKFailure(kp.name)
        q_prev = select_solution(sols, q_prev)
        kp_solutions[kp.name] = q_prev
        waypoints.append((kp.name, q_prev, kp))

    zones = tuple(zones)
    grasp_closed = False
    expanded: list[tuple[str, np.ndarray, Keypoint | None]] = [waypoints[0]]
    for (_, qa, _), (name, qb, kp) in zip(waypoints, waypoints[1:]):
        held = None
        if grasp_closed and plan.grasp_transform is not None \
                and plan.grasp_shape is not None:
            held = (plan.grasp_shape, plan.grasp_transform)
        segs = _check_or_lift(qa, qb, kp, zones, held, dh, plan)
        expanded.extend(segs)
        if kp is not None and kp.gripper.kind == "close":
            grasp_closed = True
        if kp is not None and kp.gripper.kind == "open":
            grasp_closed = False

    return _time_trajectory(expanded, zones, robot)


def _check_or_lift(qa, qb, kp, zones, held, dh, plan):
    """Either [target] or [lift_a, lift_b, target] waypoints for one segment."""
    poses = _sample_segment_tcp(qa, qb, dh)
    if not check_collision(poses, held, zones):
        return [(kp.name if kp else "wp", qb, kp)]

    drop = 0.0
    if held is not None:
        pts = _held_points(held[1], held[0])
        drop = max(0.0, -float(pts[:, 2].min()))
    z_safe = max(z.base[2] + z.height for z in zones) + 0.05 + drop

    pa, pb = fk(qa, dh), fk(qb, dh)
    lifted = []
    q_cur = qa
    for tag, ref, alt in (("lift_a", pa, pb), ("lift_b", pb, pa)):
        q_lift = None
        for orient in (ref, alt):  # endpoint orientation, then the other end's
            target = Pose6D(np.array([ref.position[0], ref.position[1],
                                      max(ref.position[2], z_safe)]),
                            orient.quat, ref.frame)
            sols = ik(target, dh, wrist_hint=float(q_cur[3]))
            if sols:
                q_lift = select_solution(sols, q_cur)
                break
        if q_lift is None:
            raise IKFailure(f"{kp.name if kp else 'segment'}:{tag}")
        lifted.append((tag, q_lift, None))
        q_cur = q_lift
    lifted.append((kp.name if kp else "wp", qb, kp))

    seq = [qa] + [q for _, q, _ in lifted]
    for s_a, s_b in zip(seq, seq[1:]):
        viol = check_collision(_sample_segment_tcp(s_a, s_b, dh), held, zones)
        if viol:
            raise CollisionFailure(viol[0].zone_id)
    return lifted


def _time_trajectory(waypoints, zones, robot) -> JointTrajectory:
    dt_sample = 0.05
    points: list[TrajectoryPoint] = []
    marks: list[tuple[str, float]] = []
    t = 0.0
    q_prev = waypoints[0][1]
    points.append(TrajectoryPoint(q_prev, t))
    for name, q, kp in waypoints[1:]:
        delta = float(np.abs(q - q_prev).max())
        duration = _segment_duration(delta, robot.vmax, robot.amax)
        if duration > 0.0:
            nsteps = max(1, int(math.ceil(duration / dt_sample)))
            for i in range(1, nsteps + 1):
                # exact endpoint time so keypoint marks match a sample
                tau = duration if i == nsteps else duration * i / nsteps
                s = _trapezoid_position(tau, delta, robot.vmax, robot.amax)
                frac = s / delta if delta > 0 else 1.0
                points.append(TrajectoryPoint(q_prev + frac * (q - q_prev), t + tau))
            t += duration
        if kp is not None:
            marks.append((name, t))
            width = math.nan
            if kp.gripper.kind in ("open", "close"):
                width = kp.gripper.width
            t += kp.dwell
            points.append(TrajectoryPoint(q, t, gripper_width=width))
        q_prev = q
    return JointTrajectory(points=tuple(points), marks=tuple(marks), zones=zones)
