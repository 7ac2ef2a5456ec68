import numpy as np
import pytest

from lucidlab.geometry import pose_error, world_to_base
from lucidlab.perception.noise import (ClassNoise, FoldedNormal, NoiseProfile,
                                       noisy_oracle, zero_profile)
from lucidlab.shapes import ObjectClass
from lucidlab.scene import make_workspace_scene


class TestFoldedNormal:
    @pytest.mark.parametrize("mean,sd", [(0.18, 0.10), (0.3, 0.2), (1.0, 0.05),
                                         (0.05, 0.03)])
    def test_two_moment_match(self, mean, sd, rng):
        fn = FoldedNormal.from_mean_sd(mean, sd)
        samples = fn.sample(rng, 200_000)
        assert samples.mean() == pytest.approx(mean, abs=4 * sd / np.sqrt(2e5) + 1e-4)
        assert samples.std() == pytest.approx(sd, rel=0.05)

    def test_infeasible_sd_keeps_mean(self, rng):
        # requested CV beyond the folded-normal maximum: mean still honored
        fn = FoldedNormal.from_mean_sd(0.3, 0.52)
        samples = fn.sample(rng, 200_000)
        assert samples.mean() == pytest.approx(0.3, abs=0.005)
        assert fn.mu == 0.0

    def test_zero_mean(self, rng):
        fn = FoldedNormal.from_mean_sd(0.0, 0.0)
        assert np.all(fn.sample(rng, 10) == 0.0)

    def test_negative_rejected(self):
        with pytest.raises(ValueError):
            FoldedNormal.from_mean_sd(-1.0, 0.1)


class TestNoisyOracle:
    def test_zero_profile_passthrough(self, workspace_scene):
        sc = workspace_scene
        ests = noisy_oracle(list(sc.objects), sc.camera, zero_profile(),
                            sc.robot_base_pose)
        assert all(e.detected for e in ests)
        for obj, est in zip(sc.objects, ests):
            truth = world_to_base(obj.pose, sc.robot_base_pose)
            err = pose_error(est.pose, truth, obj.shape.symmetry)
            assert err.position_cm == 0.0
            assert err.angle_deg < 1e-9

    def test_vessels_carry_liquid_predictions(self, workspace_scene):
        sc = workspace_scene
        ests = noisy_oracle(list(sc.objects), sc.camera, zero_profile(),
                            sc.robot_base_pose)
        beaker = next(e for e in ests if e.object_id == 2)
        assert beaker.liquid_height is not None
        assert beaker.neck is not None

    def test_seed_determinism(self, workspace_scene):
        sc = workspace_scene
        prof = sc.noise_profile.with_seed(42)
        a = noisy_oracle(list(sc.objects), sc.camera, prof, sc.robot_base_pose)
        b = noisy_oracle(list(sc.objects), sc.camera, prof, sc.robot_base_pose)
        for x, y in zip(a, b):
            assert x.detected == y.detected
            if x.detected:
                np.testing.assert_array_equal(x.pose.position, y.pose.position)
                np.testing.assert_array_equal(x.pose.quat, y.pose.quat)

    def test_seeds_differ(self, workspace_scene):
        sc = workspace_scene
        a = noisy_oracle(list(sc.objects), sc.camera,
                         sc.noise_profile.with_seed(1), sc.robot_base_pose)
        b = noisy_oracle(list(sc.objects), sc.camera,
                         sc.noise_profile.with_seed(2), sc.robot_base_pose)
        assert any(not np.array_equal(x.pose.position, y.pose.position)
                   for x, y in zip(a, b) if x.detected and y.detected)

    def test_empirical_position_mean(self, workspace_scene, rng):
        # configured 0.18 cm magnitude mean reproduced over 10^4 samples
        sc = workspace_scene
        beaker = sc.object_by_id(2)
        profile = NoiseProfile(
            per_class={ObjectClass.BEAKER: ClassNoise(0.18, 0.10)},
            occlusion_error_scale=0.0, detection_failure_prob=0.0,
            near_scale=0.0)
        occ = {2: 0.0}
        errs = []
        for _ in range(10_000):
            est = noisy_oracle([beaker], sc.camera, profile, sc.robot_base_pose,
                               rng=rng, occlusions=occ)[0]
            truth = world_to_base(beaker.pose, sc.robot_base_pose)
            errs.append(pose_error(est.pose, truth, beaker.shape.symmetry).position_cm)
        assert np.mean(errs) == pytest.approx(0.18, abs=0.02)

    def test_occlusion_failure_rate(self, workspace_scene, rng):
        sc = workspace_scene
        beaker = sc.object_by_id(2)
        profile = NoiseProfile(per_class={}, detection_failure_prob=0.5,
                               occlusion_failure_threshold=0.60)
        occ = {2: 0.75}
        missed = sum(
            not noisy_oracle([beaker], sc.camera, profile, sc.robot_base_pose,
                             rng=rng, occlusions=occ)[0].detected
            for _ in range(600))
        assert 0.4 < missed / 600 < 0.6

    def test_occlusion_scales_errors(self, workspace_scene, rng):
        sc = workspace_scene
        beaker = sc.object_by_id(2)
        profile = NoiseProfile(
            per_class={ObjectClass.BEAKER: ClassNoise(0.2, 0.1)},
            occlusion_error_scale=4.0, detection_failure_prob=0.0,
            near_scale=0.0)
        truth = world_to_base(beaker.pose, sc.robot_base_pose)

        def mean_err(occ_value, rng):
            errs = []
            for _ in range(2000):
                est = noisy_oracle([beaker], sc.camera, profile,
                                   sc.robot_base_pose, rng=rng,
                                   occlusions={2: occ_value})[0]
                errs.append(pose_error(est.pose, truth,
                                       beaker.shape.symmetry).position_cm)
            return np.mean(errs)

        clear = mean_err(0.0, np.random.default_rng(5))
        occluded = mean_err(0.5, np.random.default_rng(5))
        assert occluded == pytest.approx(3.0 * clear, rel=0.1)

    def test_outside_frustum_missed(self, workspace_scene):
        sc = workspace_scene
        beaker = sc.object_by_id(2)
        est = noisy_oracle([beaker], sc.camera, zero_profile(),
                           sc.robot_base_pose,
                           occlusions={2: float("nan")})[0]
        assert not est.detected


class TestProfileValidation:
    def test_threshold_bounds(self):
        with pytest.raises(ValueError):
            NoiseProfile(occlusion_failure_threshold=0.0)

    def test_negative_sd(self):
        with pytest.raises(ValueError):
            NoiseProfile(per_class={ObjectClass.BEAKER: ClassNoise(0.1, -0.1)})
