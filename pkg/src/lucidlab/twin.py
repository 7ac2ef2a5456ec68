"""Digital-twin executor: replays joint trajectories against the scene.

The twin steps trajectory points, maintains gripper attachment (objects move
rigidly with the TCP while held), transfers liquid on tip-in-vessel events,
and produces a validation report before anything is sent to a real arm.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace

import numpy as np

from lucidlab.geometry import (Frame, Pose6D, Symmetry, base_to_world, compose,
                               pose_error, world_to_base)
from lucidlab.kinematics import GRIPPER_MAX_WIDTH, GripperState, fk
from lucidlab.planning import (DeadZone, JointTrajectory, KeypointPlan,
                               TrajectoryPoint, check_collision, grasp_frame,
                               _sample_segment_tcp)
from lucidlab.scene import RobotModel, Scene
from lucidlab.shapes import (OPEN_TOP_CLASSES, ObjectClass, SceneObject,
                             _cavity_segments, height_for_volume, rim_radius)

GRASP_WIDTH_TOL = 0.005   # m
GRASP_POSE_TOL = 0.01     # m
REACH_POS_TOL = 1e-6      # m
REACH_ROT_TOL = 1e-6      # rad

_NO_SYMMETRY = Symmetry.none()


class TwinError(ValueError):
    """Invalid twin transition (time reversal, bad transfer, ...)."""


@dataclass(frozen=True)
class TwinState:
    """Immutable snapshot of the simulated world."""

    objects: tuple[SceneObject, ...]
    q: np.ndarray
    gripper: GripperState
    clock: float = 0.0
    robot_base_pose: Pose6D = field(default_factory=lambda: Pose6D.identity(Frame.WORLD))
    grasp_transform: Pose6D | None = None   # held object pose in TCP frame
    auto_draw_volume_ml: float = 5.0
    draw_source: int | None = None           # vessel the pipette last drew from
    events: tuple[str, ...] = ()
    ledger: tuple[tuple[str, int, int, float], ...] = ()  # (kind, from, to, ml)

    def __post_init__(self):
        object.__setattr__(self, "q", np.asarray(self.q, dtype=np.float64))
        object.__setattr__(self, "objects", tuple(self.objects))

    def object_by_id(self, oid: int) -> SceneObject:
        for o in self.objects:
            if o.id == oid:
                return o
        raise KeyError(f"twin has no object {oid}")

    def total_liquid(self) -> float:
        return sum(o.liquid_volume for o in self.objects)

    def tcp(self, robot: RobotModel) -> Pose6D:
        return fk(self.q, robot.dh)


def twin_from_scene(scene: Scene, start_q, draw_volume_ml: float = 5.0) -> TwinState:
    return TwinState(objects=scene.objects, q=np.asarray(start_q, dtype=np.float64),
                     gripper=GripperState(), robot_base_pose=scene.robot_base_pose,
                     auto_draw_volume_ml=draw_volume_ml)


def _replace_object(state: TwinState, obj: SceneObject) -> tuple[SceneObject, ...]:
    return tuple(obj if o.id == obj.id else o for o in state.objects)


def _tip_world(state: TwinState, robot: RobotModel) -> np.ndarray | None:
    """World position of the held object's local origin (the pipette tip)."""
    if state.gripper.held_object is None or state.grasp_transform is None:
        return None
    tcp = fk(state.q, robot.dh)
    obj_base = compose(tcp, state.grasp_transform)
    return base_to_world(obj_base, state.robot_base_pose).position


def _tip_inside_vessel(tip: np.ndarray, vessel: SceneObject) -> bool:
    """Tip within the vessel's neck cylinder, below the rim, above the floor."""
    rim_z_local = _cavity_segments(vessel.shape)[-1][1]
    local = vessel.pose.inverse().transform_point(tip)
    if not (0.0 < local[2] < rim_z_local):
        return False
    return math.hypot(local[0], local[1]) < rim_radius(vessel.shape)


def step(state: TwinState, point: TrajectoryPoint, robot: RobotModel) -> TwinState:
    """Advance to one trajectory point: joints, held object, gripper events.

    Closing attaches the nearest object whose grasp width matches the
    commanded width within 5 mm and whose grasp point lies within 1 cm of
    the TCP; a close with no such object is recorded as a failed-grasp
    event.  Opening releases.  A held pipette auto-draws from / pours into
    vessels whose neck the tip enters.
    """
    if point.t < state.clock:
        raise TwinError(f"trajectory time {point.t} precedes clock {state.clock}")
    state = replace(state, q=point.q, clock=point.t)

    tcp = fk(state.q, robot.dh)
    if state.gripper.held_object is not None and state.grasp_transform is not None:
        held = state.object_by_id(state.gripper.held_object)
        new_pose = base_to_world(compose(tcp, state.grasp_transform),
                                 state.robot_base_pose)
        state = replace(state, objects=_replace_object(state, held.with_pose(new_pose)))

    if not math.isnan(point.gripper_width):
        width = float(point.gripper_width)
        if width < state.gripper.width - 1e-12:
            state = _try_grasp(state, tcp, width, robot)
        elif width > state.gripper.width + 1e-12:
            state = _release(state, width)
        else:
            state = replace(state, gripper=replace(state.gripper, width=width))

    state = _liquid_events(state, robot)
    return state


def _try_grasp(state: TwinState, tcp: Pose6D, width: float,
               robot: RobotModel) -> TwinState:
    grip = replace(state.gripper, width=width)
    for obj in state.objects:
        pose_base = world_to_base(obj.pose, state.robot_base_pose)
        try:
            frame, obj_width = grasp_frame(pose_base, obj.shape)
        except Exception:
            continue
        if abs(obj_width - width) > GRASP_WIDTH_TOL:
            continue
        if np.linalg.norm(frame.position - tcp.position) > GRASP_POSE_TOL:
            continue
        grasp_tf = compose(tcp.inverse(), pose_base.retag(tcp.frame)) \
            .retag(Frame.OBJECT)
        return replace(state, gripper=replace(grip, held_object=obj.id),
                       grasp_transform=grasp_tf)
    return replace(state, gripper=grip,
                   events=state.events + (f"failed_grasp@{state.clock:.3f}",))


def _release(state: TwinState, width: float) -> TwinState:
    grip = replace(state.gripper, width=min(width, GRIPPER_MAX_WIDTH),
                   held_object=None)
    return replace(state, gripper=grip, grasp_transform=None)


def _liquid_events(state: TwinState, robot: RobotModel) -> TwinState:
    held_id = state.gripper.held_object
    if held_id is None:
        return state
    held = state.object_by_id(held_id)
    if held.cls is not ObjectClass.PIPETTE:
        return state
    tip = _tip_world(state, robot)
    if tip is None:
        return state
    for vessel in state.objects:
        if vessel.id == held_id or vessel.cls not in OPEN_TOP_CLASSES:
            continue
        if not _tip_inside_vessel(tip, vessel):
            continue
        if held.liquid_volume == 0.0 and vessel.liquid_volume > 0.0:
            liquid_z = vessel.pose.position[2] + height_for_volume(
                vessel.shape, vessel.liquid_volume)
            if tip[2] < liquid_z:
                vol = min(state.auto_draw_volume_ml,
                          held.liquid_capacity, vessel.liquid_volume)
                state = transfer_liquid(state, vessel.id, held_id, vol, robot)
                return replace(state, draw_source=vessel.id)
        elif held.liquid_volume > 0.0 and vessel.id != state.draw_source:
            state = transfer_liquid(state, held_id, vessel.id,
                                    held.liquid_volume, robot)
            return replace(state, draw_source=None)
    return state


def transfer_liquid(state: TwinState, from_id: int, to_id: int,
                    volume_ml: float, robot: RobotModel) -> TwinState:
    """Move volume_ml between containers; raises on underflow/overflow or
    when the pipette tip is not inside the vessel being drawn from/poured to."""
    if volume_ml < 0:
        raise TwinError("transfer volume must be nonnegative")
    src = state.object_by_id(from_id)
    dst = state.object_by_id(to_id)
    if src.liquid_volume + 1e-12 < volume_ml:
        raise TwinError(f"vessel {from_id} holds {src.liquid_volume} ml, "
                        f"cannot draw {volume_ml} ml")
    if dst.liquid_volume + volume_ml > dst.liquid_capacity + 1e-12:
        raise TwinError(f"vessel {to_id} lacks headroom for {volume_ml} ml")
    tip = _tip_world(state, robot)
    vessel = dst if src.cls is ObjectClass.PIPETTE else src
    if vessel.cls in OPEN_TOP_CLASSES:
        if tip is None or not _tip_inside_vessel(tip, vessel):
            raise TwinError(f"pipette tip is not inside vessel {vessel.id}")
    objects = state.objects
    state = replace(state, objects=tuple(
        o.with_liquid(o.liquid_volume - volume_ml) if o.id == from_id
        else o.with_liquid(o.liquid_volume + volume_ml) if o.id == to_id
        else o for o in objects))
    kind = "draw" if dst.cls is ObjectClass.PIPETTE else "pour"
    return replace(state, ledger=state.ledger + ((kind, from_id, to_id,
                                                  float(volume_ml)),))


# ---------------------------------------------------------------------------
# validation

@dataclass(frozen=True)
class KeypointReach:
    name: str
    position_error_m: float
    rotation_error_rad: float
    joint_error_rad: float


@dataclass(frozen=True)
class ValidationReport:
    reaches: tuple[KeypointReach, ...]
    violations: tuple[tuple[int, int, float], ...]  # (sample, zone id, depth)
    liquid_before: dict[int, float]
    liquid_after: dict[int, float]
    ledger: tuple[tuple[str, int, int, float], ...]
    events: tuple[str, ...]
    passed: bool

    def to_json(self) -> str:
        doc = {
            "passed": self.passed,
            "reaches": [{"name": r.name,
                         "position_error_m": r.position_error_m,
                         "rotation_error_rad": r.rotation_error_rad,
                         "joint_error_rad": r.joint_error_rad}
                        for r in self.reaches],
            "violations": [{"sample": s, "zone": z, "depth_m": d}
                           for s, z, d in self.violations],
            "liquid_before_ml": {str(k): v for k, v in sorted(self.liquid_before.items())},
            "liquid_after_ml": {str(k): v for k, v in sorted(self.liquid_after.items())},
            "ledger": [{"kind": k, "from": a, "to": b, "ml": v}
                       for k, a, b, v in self.ledger],
            "events": list(self.events),
        }
        return json.dumps(doc, indent=2, sort_keys=True)


def execute_and_validate(state: TwinState, trajectory: JointTrajectory,
                         plan: KeypointPlan, robot: RobotModel) \
        -> tuple[ValidationReport, TwinState]:
    """Replay the whole trajectory, recording keypoint reach errors, re-running
    the dead-zone collision check on the realized path, and balancing the
    liquid ledger.  Failures land in the report, not in exceptions."""
    before = {o.id: o.liquid_volume for o in state.objects}
    total_before = state.total_liquid()
    mark_times = dict((t, n) for n, t in trajectory.marks)

    reaches = []
    realized: list[np.ndarray] = [state.q]
    for point in trajectory.points:
        state = step(state, point, robot)
        realized.append(point.q)
        name = mark_times.get(point.t)
        if name is not None:
            kp = plan.keypoint(name)
            tcp = fk(state.q, robot.dh)
            err = pose_error(tcp, kp.tcp_pose, _NO_SYMMETRY)
            qerr = float(np.abs(state.q - point.q).max())
            reaches.append(KeypointReach(name, err.position_cm / 100.0,
                                         math.radians(err.angle_deg), qerr))

    held = None
    if plan.grasp_shape is not None and plan.grasp_transform is not None:
        held = (plan.grasp_shape, plan.grasp_transform)
    violations = []
    offset = 0
    for qa, qb in zip(realized, realized[1:]):
        poses = _sample_segment_tcp(qa, qb, robot.dh)
        for v in check_collision(poses, held, list(trajectory.zones)):
            violations.append((offset + v.sample_index, v.zone_id, v.penetration))
        offset += len(poses)

    after = {o.id: o.liquid_volume for o in state.objects}
    balanced = abs(state.total_liquid() - total_before) < 1e-12
    reach_ok = all(r.position_error_m <= REACH_POS_TOL
                   and r.rotation_error_rad <= REACH_ROT_TOL
                   and r.joint_error_rad <= REACH_POS_TOL for r in reaches) \
        and len(reaches) == len(plan.keypoints)
    passed = reach_ok and not violations and balanced
    report = ValidationReport(reaches=tuple(reaches), violations=tuple(violations),
                              liquid_before=before, liquid_after=after,
                              ledger=state.ledger, events=state.events,
                              passed=passed)
    return report, state
