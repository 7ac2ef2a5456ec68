"""Acceptance gate: every criterion at its stated tolerance, one line each.

Run with `pytest tests/test_acceptance.py -v -s` to see the pass/fail lines.
The timed criteria assume the compiled rasterizer kernel is built; the numpy
fallback is functionally identical but much slower.
"""

import math
import time

import numpy as np
import pytest
import scipy.stats

from lucidlab.bench.complexcombo import run_complex_combinations
from lucidlab.bench.dispense import run_dispense_demo, run_dispense_networked
from lucidlab.bench.sweep import ExperimentConfig, run_workspace_sweep
from lucidlab.geometry import (Frame, Pose6D, matrix_to_quat, pose_error,
                               quat_angle, quat_conjugate, quat_from_axis_angle,
                               quat_mul, quat_to_matrix)
from lucidlab.kinematics import DHTable, fk, ik
from lucidlab.perception.codebook import (build_codebook, render_mesh_depth,
                                          template_camera)
from lucidlab.perception.estimator import estimate_pose
from lucidlab.perception.render import DepthImage
from lucidlab.planning import HOME_Q
from lucidlab.scene import default_scene, make_workspace_scene
from lucidlab.shapes import ObjectClass, default_shape, tessellate
from lucidlab.stats import kruskal_wallis, mann_whitney_u
from lucidlab.transport import CrcMismatch, StreamDecoder, decode_exact, encode
from lucidlab.twin import twin_from_scene

from test_transport import messages_equal, random_message


def report(num, ok, detail):
    print(f"\n[criterion {num}] {'PASS' if ok else 'FAIL'}: {detail}")
    return ok


class TestAcceptance:
    def test_criterion_1_kinematics_roundtrip(self):
        dh = DHTable()
        rng = np.random.default_rng(20240901)
        start = time.perf_counter()
        n = 10_000
        contained = verified = 0
        for _ in range(n):
            # canonical joint range (the 8-branch solution set is canonical;
            # +-2pi aliases are continuity variants, not distinct postures)
            q = rng.uniform(-np.pi * 0.9999, np.pi * 0.9999, 6)
            target = fk(q, dh)
            sols = ik(target, dh)
            if any(np.abs(s - q).max() < 1e-6 for s in sols):
                contained += 1
            ok_all = True
            for s in sols:
                reached = fk(s, dh)
                if np.linalg.norm(reached.position - target.position) >= 1e-6:
                    ok_all = False
                dq = quat_mul(quat_conjugate(reached.quat), target.quat)
                if quat_angle(dq) >= 1e-6:
                    ok_all = False
            verified += ok_all
        elapsed = time.perf_counter() - start
        ok = contained == n and verified == n and elapsed < 10.0
        assert report(1, ok,
                      f"IK roundtrip {contained}/{n} contained, "
                      f"{verified}/{n} fully FK-verified, {elapsed:.1f} s (< 10 s)")

    @pytest.mark.parametrize("spacing,rot_bound", [(15.0, 30.0), (5.0, 10.0)])
    def test_criterion_2_codebook_estimator(self, spacing, rot_bound):
        start = time.perf_counter()
        cam = template_camera()
        rng = np.random.default_rng(777)
        all_ok = True
        details = []
        for cls in ObjectClass:
            shape = default_shape(cls)
            cb = build_codebook(shape, spacing, 0.40, cls)
            mesh = tessellate(shape, 16)
            tris = mesh.triangles()
            center = 0.5 * (mesh.vertices.min(0) + mesh.vertices.max(0))
            rot_errs, pos_errs = [], []
            for _ in range(200):
                axis = rng.normal(size=3)
                axis /= np.linalg.norm(axis)
                rot = quat_to_matrix(quat_from_axis_angle(axis,
                                                          rng.uniform(0, np.pi)))
                trans = np.array([rng.uniform(-0.03, 0.03),
                                  rng.uniform(-0.03, 0.03),
                                  rng.uniform(0.35, 0.5)]) - rot @ center
                depth = render_mesh_depth(tris, rot, trans, cam)
                est = estimate_pose(DepthImage(depth, cam), depth > 0, cb, 1)
                assert est.detected
                err = pose_error(est.pose,
                                 Pose6D(trans, matrix_to_quat(rot),
                                        Frame.ROBOT_BASE), shape.symmetry)
                rot_errs.append(err.angle_deg)
                pos_errs.append(err.position_cm)
            med_r = float(np.median(rot_errs))
            med_p = float(np.median(pos_errs))
            all_ok &= med_r <= rot_bound and med_p <= 1.0
            details.append(f"{cls.name.lower()} rot {med_r:.1f} pos {med_p:.2f}")
        elapsed = time.perf_counter() - start
        all_ok &= elapsed < 300.0
        assert report(2, all_ok,
                      f"spacing {spacing:g} deg (bounds {rot_bound:g} deg / 1 cm, "
                      f"{elapsed:.0f} s < 300 s): " + "; ".join(details))

    def test_criterion_3_calibration_reproduction(self):
        scene = make_workspace_scene()
        config = ExperimentConfig(trials_per_cell=40, seed=1)  # 1000 trials
        start = time.perf_counter()
        res = run_workspace_sweep(config, scene)
        elapsed = time.perf_counter() - start
        n_trials = config.trials_per_cell * (
            len(config.heights_cm) * len(config.pitches_deg)
            + len(config.distances_cm))
        pos = res.overall_position_mean_cm
        rot = res.overall_rotation_mean_deg
        h40 = res.height_position_means_cm[40.0]
        ok = (abs(pos - 0.18) <= 0.05 and abs(rot - 0.39) <= 0.15
              and abs(h40 - 0.3) <= 0.1 and elapsed < 60.0 and n_trials >= 1000)
        assert report(3, ok,
                      f"overall position {pos:.3f} cm (0.18±0.05), rotation "
                      f"{rot:.3f} deg (0.39±0.15), 40 cm cell {h40:.3f} cm "
                      f"(0.3±0.1); {n_trials} trials, {elapsed:.1f} s (< 60 s)")

    def test_criterion_4_complex_combinations(self):
        scene = make_workspace_scene()
        config = ExperimentConfig(scenes=150, seed=1)
        res = run_complex_combinations(config, scene.noise_profile)
        roll, pitch, yaw = res.axis_means_deg
        axes_ok = (abs(roll - 0.6) <= 0.3 and abs(pitch - 1.1) <= 0.3
                   and abs(yaw - 0.5) <= 0.3)
        det_ok = res.detection_rate_high_occ < res.detection_rate_low_occ
        p = res.occlusion_detection_test.p_value \
            if res.occlusion_detection_test else 1.0
        ok = axes_ok and det_ok and p < 0.05
        assert report(4, ok,
                      f"roll/pitch/yaw {roll:.2f}/{pitch:.2f}/{yaw:.2f} deg "
                      f"(0.6/1.1/0.5 ±0.3); detection {res.detection_rate_high_occ:.2f}"
                      f" (occ>0.6) < {res.detection_rate_low_occ:.2f} (occ<0.3), "
                      f"Mann-Whitney p={p:.2e} (< .05)")

    def test_criterion_5_dispense_episode(self):
        scene = default_scene()
        a = run_dispense_demo(scene, seed=0)
        b = run_dispense_demo(scene, seed=0)
        reaches_ok = (len(a.report.reaches) == 6
                      and all(r.joint_error_rad <= 1e-6
                              and r.position_error_m <= 1e-6
                              for r in a.report.reaches))
        total_before = sum(a.report.liquid_before.values())
        total_after = sum(a.report.liquid_after.values())
        ledger_ok = abs(total_before - total_after) <= 1e-12
        same_bytes = a.report.to_json() == b.report.to_json()
        ok = (a.passed and reaches_ok and not a.report.violations and ledger_ok
              and same_bytes)
        assert report(5, ok,
                      f"pass={a.passed}, 6 keypoints within 1e-6, "
                      f"{len(a.report.violations)} zone violations, ledger "
                      f"balance {abs(total_before - total_after):.1e} ml, "
                      f"same-seed report bytes identical={same_bytes}")

    def test_criterion_6_statistics(self):
        h = kruskal_wallis([[1, 2, 3], [4, 5, 6], [7, 8, 9]])
        kw_ok = abs(h.statistic - 7.2) <= 1e-9

        rng = np.random.default_rng(5150)
        identity_ok = True
        for _ in range(1000):
            a = rng.normal(size=int(rng.integers(1, 15)))
            b = rng.normal(size=int(rng.integers(1, 15)))
            ua = mann_whitney_u(a, b).statistic
            ub = mann_whitney_u(b, a).statistic
            if abs(ua + ub - len(a) * len(b)) > 1e-9:
                identity_ok = False
        ref_ok = True
        worst_stat = worst_p = 0.0
        for _ in range(50):
            k = int(rng.integers(2, 5))
            groups = [rng.normal(loc=rng.uniform(-1, 1),
                                 size=int(rng.integers(4, 12)))
                      for _ in range(k)]
            mine = kruskal_wallis(groups)
            ref = scipy.stats.kruskal(*groups)
            worst_stat = max(worst_stat, abs(mine.statistic - ref.statistic))
            worst_p = max(worst_p, abs(mine.p_value - ref.pvalue))
            a = rng.normal(size=int(rng.integers(4, 12)))
            b = rng.normal(size=int(rng.integers(4, 12)))
            mu = mann_whitney_u(a, b)
            ref_u = scipy.stats.mannwhitneyu(a, b, alternative="two-sided",
                                             method="exact")
            worst_stat = max(worst_stat, abs(mu.statistic - ref_u.statistic))
            worst_p = max(worst_p, abs(mu.p_value - ref_u.pvalue))
        ref_ok = worst_stat <= 1e-9 and worst_p <= 1e-6
        ok = kw_ok and identity_ok and ref_ok
        assert report(6, ok,
                      f"H={h.statistic:.12f} (7.2±1e-9); U identity over 10^3 "
                      f"inputs={identity_ok}; reference match worst dstat="
                      f"{worst_stat:.1e} dp={worst_p:.1e}")

    def test_criterion_7_transport(self):
        rng = np.random.default_rng(31337)
        roundtrip_ok = True
        for _ in range(10_000):
            msg = random_message(rng)
            frame = encode(msg)
            decoded = decode_exact(frame)
            if not messages_equal(msg, decoded) or encode(decoded) != frame:
                roundtrip_ok = False
                break

        base = encode(random_message(np.random.default_rng(1)))
        while len(base) <= 14:  # want a non-empty payload
            base = encode(random_message(np.random.default_rng(2)))
        rejected = 0
        payload_bits = (len(base) - 14) * 8
        for _ in range(10_000):
            bit = int(rng.integers(0, payload_bits)) + 10 * 8
            mutated = bytearray(base)
            mutated[bit // 8] ^= 1 << (bit % 8)
            events = StreamDecoder().feed(bytes(mutated))
            if len(events) == 1 and isinstance(events[0], CrcMismatch):
                rejected += 1

        scene = default_scene()
        in_proc = run_dispense_demo(scene, seed=0)
        net_state, _, _, _ = run_dispense_networked(scene, seed=0)
        ref_state = in_proc.twin_state
        state_ok = (np.array_equal(net_state.q, ref_state.q)
                    and all(np.array_equal(x.pose.position, y.pose.position)
                            and np.array_equal(x.pose.quat, y.pose.quat)
                            and x.liquid_volume == y.liquid_volume
                            for x, y in zip(net_state.objects, ref_state.objects))
                    and net_state.ledger == ref_state.ledger)
        ok = roundtrip_ok and rejected == 10_000 and state_ok
        assert report(7, ok,
                      f"roundtrip byte-exact over 10^4 messages={roundtrip_ok}; "
                      f"bit corruptions rejected {rejected}/10000; networked twin "
                      f"state identical={state_ok}")

    def test_criterion_8_suite_runtime_note(self):
        # The binding measurement is the wall time of the whole pytest run
        # (see test_output.txt); this records the acceptance module's share.
        elapsed = time.perf_counter() - _MODULE_START
        assert report(8, elapsed < 540.0,
                      f"acceptance module finished in {elapsed:.0f} s; full-suite "
                      "wall time must stay under 600 s (see the pytest footer)")


_MODULE_START = time.perf_counter()
