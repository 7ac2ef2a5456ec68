"""Command-line interface.

Subcommands: sweep, complex, dispense, estimate, plan, serve-perception,
serve-exec.  Common flags: --scene, --seed, --out, --profile, --estimator.
Server addresses come from --addr or the LUCID_PERCEPTION_ADDR /
LUCID_EXEC_ADDR environment variables.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from pathlib import Path

import numpy as np

from lucidlab import transport
from lucidlab.bench.complexcombo import run_complex_combinations
from lucidlab.bench.dispense import (default_dispense_spec, run_dispense_demo,
                                     run_dispense_networked, trajectory_csv)
from lucidlab.bench.sweep import ExperimentConfig, run_workspace_sweep
from lucidlab.geometry import pose_error, world_to_base
from lucidlab.perception.codebook import build_codebook
from lucidlab.perception.estimator import estimate_pose
from lucidlab.perception.noise import noisy_oracle
from lucidlab.perception.render import object_masks
from lucidlab.planning import HOME_Q, plan_to_dict, plan_trajectory
from lucidlab.bench.dispense import plan_dispense
from lucidlab.scene import (Scene, default_scene, load_scene, make_workspace_scene,
                            noise_from_dict)
from lucidlab.twin import twin_from_scene


def _load_scene(args) -> Scene:
    if args.scene:
        scene = load_scene(args.scene)
    elif getattr(args, "workspace_layout", False):
        scene = make_workspace_scene()
    else:
        scene = default_scene()
    if getattr(args, "profile", None):
        from dataclasses import replace
        profile = noise_from_dict(json.loads(Path(args.profile).read_text()))
        scene = replace(scene, noise_profile=profile)
    if getattr(args, "seed", None) is not None:
        from dataclasses import replace
        scene = replace(scene, noise_profile=scene.noise_profile.with_seed(args.seed))
    return scene


def _parse_addr(value: str, default_port: int):
    if ":" in value:
        host, port = value.rsplit(":", 1)
        return host, int(port)
    return value, default_port


def _add_common(p, workspace_default=False):
    p.add_argument("--scene", help="scene JSON file (default: packaged scene)")
    p.add_argument("--seed", type=int, default=None, help="noise profile seed")
    p.add_argument("--out", help="output directory for CSV/JSON artifacts")
    p.add_argument("--profile", help="noise profile JSON file overriding the scene's")
    p.add_argument("--estimator", choices=("oracle", "codebook"), default="oracle",
                   help="perception path: calibrated oracle or full codebook pipeline")
    if workspace_default:
        p.add_argument("--dispense-layout", dest="workspace_layout",
                       action="store_false",
                       help="use the dispense scene instead of the spread workspace layout")
        p.set_defaults(workspace_layout=True)


def cmd_sweep(args) -> int:
    scene = _load_scene(args)
    cfg = ExperimentConfig(trials_per_cell=args.trials, seed=args.seed or 0)
    res = run_workspace_sweep(cfg, scene, out_dir=args.out,
                              estimator=args.estimator)
    print(f"overall position mean: {res.overall_position_mean_cm:.3f} cm")
    print(f"overall rotation mean: {res.overall_rotation_mean_deg:.3f} deg")
    for h, m in sorted(res.height_position_means_cm.items()):
        print(f"height {h:g} cm position mean: {m:.3f} cm")
    for name, st in sorted(res.stats.items()):
        print(f"{name}: statistic={st.statistic:.3f} p={st.p_value:.4g}")
    if res.flagged_cells:
        print("flagged cells:", ", ".join(res.flagged_cells))
    if args.out:
        print(f"tables written to {args.out}")
    return 0


def cmd_complex(args) -> int:
    scene = _load_scene(args)
    cfg = ExperimentConfig(scenes=args.scenes, seed=args.seed or 0)
    res = run_complex_combinations(cfg, scene.noise_profile, out_dir=args.out)
    print("roll/pitch/yaw mean errors: %.3f / %.3f / %.3f deg" % res.axis_means_deg)
    print("detection rate (occlusion < 0.30): %.3f" % res.detection_rate_low_occ)
    print("detection rate (occlusion > 0.60): %.3f" % res.detection_rate_high_occ)
    if res.occlusion_detection_test is not None:
        print("detection drop Mann-Whitney p: %.4g"
              % res.occlusion_detection_test.p_value)
    return 0


def cmd_dispense(args) -> int:
    scene = _load_scene(args)
    try:
        if args.networked:
            state, plan, traj, warnings = run_dispense_networked(scene, seed=args.seed)
            from lucidlab.twin import execute_and_validate
            # re-validate in-process for the printed report
            report, _ = execute_and_validate(
                twin_from_scene(scene, HOME_Q), traj, plan, scene.robot)
            result_passed = report.passed
        else:
            res = run_dispense_demo(scene, seed=args.seed)
            report, traj, warnings = res.report, res.trajectory, res.warnings
            result_passed = res.passed
    except Exception as exc:
        print(f"dispense failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    for w in warnings:
        print(f"warning: {w}")
    print("keypoint reach errors:")
    for r in report.reaches:
        print(f"  {r.name:14s} pos {r.position_error_m:.2e} m  "
              f"rot {r.rotation_error_rad:.2e} rad")
    print(f"dead-zone violations: {len(report.violations)}")
    for kind, src, dst, ml in report.ledger:
        print(f"  {kind}: {ml:g} ml  {src} -> {dst}")
    print("PASS" if result_passed else "FAIL")
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "dispense_report.json").write_text(report.to_json(), encoding="utf-8")
        (out / "dispense_trajectory.csv").write_text(trajectory_csv(traj),
                                                     encoding="utf-8")
        print(f"report and trajectory written to {args.out}")
    return 0 if result_passed else 1


def cmd_estimate(args) -> int:
    scene = _load_scene(args)
    objects = list(scene.objects)
    if args.estimator == "oracle":
        ests = noisy_oracle(objects, scene.camera, scene.noise_profile,
                            scene.robot_base_pose)
    else:
        depth, masks = object_masks(objects, scene.camera, scene.robot_base_pose)
        ests = []
        for obj in objects:
            cb = build_codebook(obj.shape, args.spacing, 0.40, obj.cls)
            ests.append(estimate_pose(depth, masks[obj.id], cb, obj.id))
    print(f"{'id':>3} {'class':20} {'detected':8} {'pos err cm':>10} {'rot err deg':>11}")
    for obj, est in zip(objects, ests):
        if not est.detected:
            print(f"{obj.id:>3} {obj.cls.name.lower():20} {'no':8} {'-':>10} {'-':>11}")
            continue
        truth = world_to_base(obj.pose, scene.robot_base_pose)
        err = pose_error(est.pose, truth, obj.shape.symmetry)
        print(f"{obj.id:>3} {obj.cls.name.lower():20} {'yes':8} "
              f"{err.position_cm:>10.3f} {err.angle_deg:>11.3f}")
    return 0


def cmd_plan(args) -> int:
    scene = _load_scene(args)
    estimates = noisy_oracle(list(scene.objects), scene.camera,
                             scene.noise_profile, scene.robot_base_pose)
    plan, zones, warnings = plan_dispense(scene, estimates)
    for w in warnings:
        print(f"warning: {w}")
    print(f"{'keypoint':14} {'x':>8} {'y':>8} {'z':>8} {'gripper':10} {'tip target'}")
    for kp in plan.keypoints:
        p = kp.tcp_pose.position
        tip = "-" if kp.tip_target is None else \
            "(%.3f, %.3f, %.3f)" % tuple(kp.tip_target)
        print(f"{kp.name:14} {p[0]:8.3f} {p[1]:8.3f} {p[2]:8.3f} "
              f"{kp.gripper.kind:10} {tip}")
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "plan.json").write_text(
            json.dumps(plan_to_dict(plan), indent=2, sort_keys=True) + "\n",
            encoding="utf-8")
    if args.dry_run:
        return 0
    traj = plan_trajectory(plan, zones, HOME_Q, scene.robot)
    print(f"trajectory: {len(traj.points)} points, {traj.duration:.2f} s, "
          f"{len(zones)} dead zones")
    if args.out:
        (Path(args.out) / "plan_trajectory.csv").write_text(
            trajectory_csv(traj), encoding="utf-8")
    return 0


def cmd_twin_run(args) -> int:
    scene = _load_scene(args)
    try:
        res = run_dispense_demo(scene, seed=args.seed)
    except Exception as exc:
        print(f"twin run failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    report = res.report
    print(f"{'keypoint':14} {'pos err m':>12} {'rot err rad':>12} {'status':>8}")
    for r in report.reaches:
        ok = r.position_error_m <= 1e-6 and r.rotation_error_rad <= 1e-6
        print(f"{r.name:14} {r.position_error_m:>12.2e} "
              f"{r.rotation_error_rad:>12.2e} {'ok' if ok else 'MISS':>8}")
    print(f"{'violations':14} {len(report.violations):>12}")
    balance = abs(sum(report.liquid_before.values())
                  - sum(report.liquid_after.values()))
    print(f"{'ledger (ml)':14} {balance:>12.1e}")
    print("PASS" if report.passed else "FAIL")
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "twin_report.json").write_text(report.to_json(), encoding="utf-8")
    return 0 if report.passed else 1


def cmd_serve_perception(args) -> int:
    scene = _load_scene(args)
    addr = args.addr or os.environ.get(transport.PERCEPTION_ADDR_ENV,
                                       f"127.0.0.1:{transport.DEFAULT_PERCEPTION_PORT}")
    host, port = _parse_addr(addr, transport.DEFAULT_PERCEPTION_PORT)
    server = transport.PerceptionServer(scene, rate_hz=args.rate,
                                        host=host, port=port).start()
    print(f"perception server on {server.address[0]}:{server.address[1]} "
          f"({args.rate} Hz)")
    try:
        while True:
            time.sleep(0.5)
    except KeyboardInterrupt:
        server.stop()
    return 0


def cmd_serve_exec(args) -> int:
    scene = _load_scene(args)
    addr = args.addr or os.environ.get(transport.EXECUTION_ADDR_ENV,
                                       f"127.0.0.1:{transport.DEFAULT_EXECUTION_PORT}")
    host, port = _parse_addr(addr, transport.DEFAULT_EXECUTION_PORT)
    twin = twin_from_scene(scene, HOME_Q)
    server = transport.ExecutionServer(twin, scene.robot, host=host, port=port).start()
    print(f"execution server on {server.address[0]}:{server.address[1]}")
    try:
        while True:
            time.sleep(0.5)
    except KeyboardInterrupt:
        server.stop()
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="lucidlab",
                                 description="Lab-manipulation simulator harness")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("sweep", help="camera workspace sweeps + statistics")
    _add_common(p, workspace_default=True)
    p.add_argument("--trials", type=int, default=40, help="trials per camera cell")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("complex", help="stacked/nested/occluded scene study")
    _add_common(p)
    p.add_argument("--scenes", type=int, default=150)
    p.set_defaults(func=cmd_complex)

    p = sub.add_parser("dispense", help="autonomous liquid transfer episode")
    _add_common(p)
    p.add_argument("--networked", action="store_true",
                   help="run through the wire protocol on loopback")
    p.set_defaults(func=cmd_dispense)

    p = sub.add_parser("estimate", help="per-object pose estimation report")
    _add_common(p)
    p.add_argument("--spacing", type=float, default=15.0,
                   help="codebook angular spacing (codebook estimator)")
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("plan", help="form the dispense keypoint plan")
    _add_common(p)
    p.add_argument("--dry-run", action="store_true",
                   help="print the keypoint table without planning a trajectory")
    p.set_defaults(func=cmd_plan)

    p = sub.add_parser("twin", help="digital-twin operations")
    twin_sub = p.add_subparsers(dest="twin_command", required=True)
    pr = twin_sub.add_parser("run", help="replay the planned episode and "
                             "print the validation table")
    _add_common(pr)
    pr.set_defaults(func=cmd_twin_run)

    p = sub.add_parser("serve-perception", help="pose stream server")
    _add_common(p)
    p.add_argument("--addr", help="host:port (default env or 127.0.0.1:7401)")
    p.add_argument("--rate", type=float, default=10.0, help="PoseUpdate rate, Hz")
    p.set_defaults(func=cmd_serve_perception)

    p = sub.add_parser("serve-exec", help="trajectory execution server")
    _add_common(p)
    p.add_argument("--addr", help="host:port (default env or 127.0.0.1:7402)")
    p.set_defaults(func=cmd_serve_exec)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
