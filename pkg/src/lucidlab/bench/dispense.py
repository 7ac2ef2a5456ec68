"""Autonomous dispense episode: perceive, plan, validate in the twin.

The pipeline forms the six-keypoint liquid-transfer plan from perceived
poses, drops dead zones that contain plan keypoints (the object supporting
the pipette cannot be an exclusion zone for its own grasp), plans the
trajectory, and replays it in the digital twin.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass

import numpy as np

from lucidlab.perception.noise import noisy_oracle
from lucidlab.planning import (HOME_Q, KeypointPlan, JointTrajectory, TaskKind,
                               TaskSpec, dead_zones_with_warnings, form_dispense,
                               plan_trajectory)
from lucidlab.scene import Scene
from lucidlab.shapes import ObjectClass
from lucidlab.twin import TwinState, ValidationReport, execute_and_validate, twin_from_scene


@dataclass(frozen=True)
class DispenseResult:
    plan: KeypointPlan
    trajectory: JointTrajectory
    report: ValidationReport
    twin_state: TwinState
    warnings: tuple[str, ...]

    @property
    def passed(self) -> bool:
        return self.report.passed


def default_dispense_spec(scene: Scene, draw_volume_ml: float = 5.0) -> TaskSpec:
    """Dispense task on the scene's pipette / beaker / flask triplet."""
    return TaskSpec(kind=TaskKind.DISPENSE,
                    pipette_id=scene.by_class(ObjectClass.PIPETTE).id,
                    source_id=scene.by_class(ObjectClass.BEAKER).id,
                    target_id=scene.by_class(ObjectClass.FLASK).id,
                    draw_volume_ml=draw_volume_ml)


def filter_support_zones(zones, plan: KeypointPlan):
    """Drop zones that contain a plan keypoint TCP or tip target.

    A keypoint inside a capsule is unreachable by definition; such objects
    (like the rack the pipette rests in) are part of the manipulation and
    are excluded with a warning.
    """
    points = [kp.tcp_pose.position for kp in plan.keypoints]
    points += [np.asarray(kp.tip_target) for kp in plan.keypoints
               if kp.tip_target is not None]
    pts = np.vstack(points)
    kept, warnings = [], []
    for z in zones:
        if float(z.penetration(pts).max()) > 0.0:
            warnings.append(f"dead zone of object {z.object_id} contains a "
                            "plan keypoint: treated as task support, excluded")
        else:
            kept.append(z)
    return kept, warnings


def plan_dispense(scene: Scene, estimates, spec: TaskSpec | None = None):
    """(plan, zones, warnings) for a dispense episode on `scene`."""
    if spec is None:
        spec = default_dispense_spec(scene)
    catalog = list(scene.objects)
    plan = form_dispense(estimates, spec, catalog, scene.robot)
    active = {spec.pipette_id, spec.source_id, spec.target_id}
    zones, warnings = dead_zones_with_warnings(estimates, active, catalog)
    zones, drop_warnings = filter_support_zones(zones, plan)
    return plan, zones, tuple(warnings + drop_warnings)


def run_dispense_demo(scene: Scene, seed: int | None = None,
                      spec: TaskSpec | None = None,
                      start_q=HOME_Q) -> DispenseResult:
    """Full in-process pipeline: perceive -> form -> plan -> twin validate."""
    profile = scene.noise_profile
    if seed is not None:
        profile = profile.with_seed(seed)
    estimates = noisy_oracle(list(scene.objects), scene.camera, profile,
                             scene.robot_base_pose)
    if spec is None:
        spec = default_dispense_spec(scene)
    plan, zones, warnings = plan_dispense(scene, estimates, spec)
    trajectory = plan_trajectory(plan, zones, start_q, scene.robot)
    twin = twin_from_scene(scene, start_q, draw_volume_ml=spec.draw_volume_ml)
    report, state = execute_and_validate(twin, trajectory, plan, scene.robot)
    return DispenseResult(plan=plan, trajectory=trajectory, report=report,
                          twin_state=state, warnings=warnings)


def attach_liquid_predictions(estimates, scene: Scene):
    """Fill liquid/neck fields on detected estimates of open-top vessels.

    Pose updates on the wire carry no liquid geometry; clients recompute it
    from the shared scene catalog.
    """
    from dataclasses import replace
    from lucidlab.perception.liquid import predict_liquid_and_neck
    from lucidlab.shapes import OPEN_TOP_CLASSES

    out = []
    for est in estimates:
        if est.detected:
            obj = scene.object_by_id(est.object_id)
            if obj.cls in OPEN_TOP_CLASSES:
                height, neck = predict_liquid_and_neck(obj, scene.camera,
                                                       scene.robot_base_pose)
                est = replace(est, liquid_height=height, neck=neck)
        out.append(est)
    return out


def run_dispense_networked(scene: Scene, seed: int | None = None,
                           spec: TaskSpec | None = None,
                           start_q=HOME_Q):
    """Same episode as run_dispense_demo but through the wire protocol:
    a perception server streams poses, an execution server owns the twin,
    and the in-process client only talks frames to both.  Returns the
    execution server's final twin state plus the plan/trajectory used."""
    from lucidlab.transport import (Ack, Client, ExecutionServer,
                                    PerceptionServer, PoseUpdate, SceneRequest,
                                    TrajectoryCommand)

    profile = scene.noise_profile
    if seed is not None:
        profile = profile.with_seed(seed)
    if spec is None:
        spec = default_dispense_spec(scene)

    perception = PerceptionServer(scene, profile, rate_hz=0).start()
    execution = ExecutionServer(
        twin_from_scene(scene, start_q, draw_volume_ml=spec.draw_volume_ml),
        scene.robot).start()
    try:
        pc = Client(perception.address)
        try:
            pc.send(SceneRequest())
            update = pc.recv_type(PoseUpdate)
        finally:
            pc.close()
        estimates = attach_liquid_predictions(update.to_estimates(), scene)
        plan, zones, warnings = plan_dispense(scene, estimates, spec)
        trajectory = plan_trajectory(plan, zones, start_q, scene.robot)

        ec = Client(execution.address)
        try:
            ec.send(TrajectoryCommand.from_trajectory(1, trajectory))
            accepted = ec.recv_type(Ack)
            done = ec.recv_type(Ack)
            if (accepted.status, done.status) != (0, 1):
                raise RuntimeError("execution server did not complete the "
                                   f"trajectory: {accepted}, {done}")
        finally:
            ec.close()
        state = execution.twin_snapshot()
    finally:
        perception.stop()
        execution.stop()
    return state, plan, trajectory, warnings


def trajectory_csv(trajectory: JointTrajectory) -> str:
    """One row per trajectory point: t, q1..q6, gripper width (blank = hold)."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["t_s", "q1", "q2", "q3", "q4", "q5", "q6", "gripper_width_m"])
    for p in trajectory.points:
        width = "" if math.isnan(p.gripper_width) else repr(float(p.gripper_width))
        w.writerow([repr(float(p.t))] + [repr(float(v)) for v in p.q] + [width])
    return buf.getvalue()
