"""Calibrated perception noise oracle.

Ground-truth poses are perturbed by per-class error models: position error
magnitudes follow a folded normal matched to the configured mean/SD (mean is
always honored exactly; if the SD implies a coefficient of variation beyond
what a folded normal can reach, it saturates at the half-normal), directions
are uniform on the sphere, and per-axis rotation errors are signed folded
normals.  Errors grow with occlusion and at close camera range; objects
occluded beyond the failure threshold drop out with a configured probability.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import brentq

from lucidlab.geometry import (CameraModel, Pose6D, matrix_to_quat, rpy_to_matrix,
                               world_to_base)
from lucidlab.perception.estimator import occlusion_fractions
from lucidlab.perception.liquid import predict_liquid_and_neck
from lucidlab.perception.render import camera_pose_world
from lucidlab.perception.types import PerceptionEstimate
from lucidlab.shapes import OPEN_TOP_CLASSES, ObjectClass, SceneObject

_HALF_NORMAL_MEAN = math.sqrt(2.0 / math.pi)


@dataclass(frozen=True)
class FoldedNormal:
    """|N(mu, sigma^2)| parametrized by its own mean/SD."""

    mu: float
    sigma: float

    @classmethod
    def from_mean_sd(cls, mean: float, sd: float) -> "FoldedNormal":
        if mean < 0 or sd < 0:
            raise ValueError("folded normal mean/SD must be nonnegative")
        if mean == 0.0:
            return cls(0.0, 0.0)
        r2 = mean * mean + sd * sd
        r = math.sqrt(r2)
        if mean <= _HALF_NORMAL_MEAN * r:
            # Requested SD/mean ratio exceeds the folded-normal maximum;
            # keep the mean exact with the half-normal.
            return cls(0.0, mean / _HALF_NORMAL_MEAN)
        if sd == 0.0:
            return cls(mean, 0.0)

        def mean_err(t):
            sig = r / math.sqrt(1.0 + t * t)
            mu = sig * t
            return (sig * _HALF_NORMAL_MEAN * math.exp(-0.5 * t * t)
                    + mu * math.erf(t / math.sqrt(2.0))) - mean
        t = brentq(mean_err, 0.0, 60.0, xtol=1e-14)
        sig = r / math.sqrt(1.0 + t * t)
        return cls(sig * t, sig)

    def sample(self, rng: np.random.Generator, n: int | None = None):
        if self.sigma == 0.0:
            return self.mu if n is None else np.full(n, self.mu)
        return np.abs(rng.normal(self.mu, self.sigma, n))


@dataclass(frozen=True)
class ClassNoise:
    """Error statistics for one object class (cm and degrees)."""

    position_mean_cm: float = 0.0
    position_sd_cm: float = 0.0
    rot_mean_deg: tuple[float, float, float] = (0.0, 0.0, 0.0)
    rot_sd_deg: tuple[float, float, float] = (0.0, 0.0, 0.0)

    def samplers(self):
        pos = FoldedNormal.from_mean_sd(self.position_mean_cm, self.position_sd_cm)
        rot = tuple(FoldedNormal.from_mean_sd(m, s)
                    for m, s in zip(self.rot_mean_deg, self.rot_sd_deg))
        return pos, rot


@dataclass(frozen=True)
class NoiseProfile:
    """Per-class error model plus occlusion and close-range behavior."""

    per_class: dict[ObjectClass, ClassNoise] = field(default_factory=dict)
    occlusion_failure_threshold: float = 0.60
    occlusion_error_scale: float = 1.0
    detection_failure_prob: float = 0.5
    near_reference_m: float = 0.45
    near_scale: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if not (0.0 < self.occlusion_failure_threshold <= 1.0):
            raise ValueError("occlusion failure threshold must be in (0, 1]")
        for cn in self.per_class.values():
            if cn.position_sd_cm < 0 or min(cn.rot_sd_deg) < 0:
                raise ValueError("noise SDs must be nonnegative")

    def for_class(self, cls: ObjectClass) -> ClassNoise:
        return self.per_class.get(cls, ClassNoise())

    def with_seed(self, seed: int) -> "NoiseProfile":
        return replace(self, seed=seed)


def zero_profile() -> NoiseProfile:
    return NoiseProfile(occlusion_error_scale=0.0, detection_failure_prob=0.0,
                        near_scale=0.0)


def _unit_vector(rng: np.random.Generator) -> np.ndarray:
    v = rng.normal(size=3)
    n = np.linalg.norm(v)
    while n < 1e-12:
        v = rng.normal(size=3)
        n = np.linalg.norm(v)
    return v / n


def noisy_oracle(scene: list[SceneObject], cam: CameraModel,
                 profile: NoiseProfile,
                 robot_base_pose: Pose6D | None = None,
                 rng: np.random.Generator | None = None,
                 occlusions: dict[int, float] | None = None,
                 resolution: int = 16) -> list[PerceptionEstimate]:
    """Ground truth + sampled errors for every scene object (ROBOT_BASE frame).

    Deterministic for a fixed profile seed (or caller-supplied generator).
    Precomputed occlusion fractions can be passed in to avoid re-rendering
    a static scene across repeated trials.
    """
    if rng is None:
        rng = np.random.default_rng(profile.seed)
    if occlusions is None:
        occlusions = occlusion_fractions(scene, cam, robot_base_pose, resolution)
    cam_world = camera_pose_world(cam, robot_base_pose)

    out = []
    for obj in scene:
        occ = occlusions[obj.id]
        if math.isnan(occ):
            out.append(PerceptionEstimate.missed(obj.id))
            continue
        if occ > profile.occlusion_failure_threshold \
                and rng.uniform() < profile.detection_failure_prob:
            out.append(PerceptionEstimate.missed(obj.id))
            continue

        dist = float(np.linalg.norm(obj.pose.position - cam_world.position))
        near = 1.0 + profile.near_scale * max(
            0.0, (profile.near_reference_m - dist) / profile.near_reference_m)
        scale = (1.0 + profile.occlusion_error_scale * occ) * near

        pos_sampler, rot_samplers = profile.for_class(obj.cls).samplers()
        mag_m = float(pos_sampler.sample(rng)) * scale / 100.0
        dpos = _unit_vector(rng) * mag_m
        signs = rng.integers(0, 2, size=3) * 2 - 1
        dr, dp, dy = (np.radians(float(s.sample(rng)) * scale) * sign
                      for s, sign in zip(rot_samplers, signs))

        truth = world_to_base(obj.pose, robot_base_pose
                              if robot_base_pose is not None
                              else Pose6D.identity())
        rot = truth.rotation @ rpy_to_matrix(dr, dp, dy)
        pose = Pose6D(truth.position + dpos, matrix_to_quat(rot), truth.frame)

        liquid_height = neck = None
        if obj.cls in OPEN_TOP_CLASSES:
            liquid_height, neck = predict_liquid_and_neck(obj, cam, robot_base_pose)

        out.append(PerceptionEstimate(object_id=obj.id, detected=True, pose=pose,
                                      confidence=max(0.0, 1.0 - occ),
                                      liquid_height=liquid_height, neck=neck))
    return out
