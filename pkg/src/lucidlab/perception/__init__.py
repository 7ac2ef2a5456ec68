"""Synthetic perception: depth rendering, codebook pose estimation, noise
oracle, and liquid/neck prediction."""

from lucidlab.perception.types import NeckEllipse, PerceptionEstimate
from lucidlab.perception.render import DepthImage, render_depth, render_object, object_masks
from lucidlab.perception.codebook import ViewpointCodebook, build_codebook
from lucidlab.perception.estimator import estimate_pose, occlusion_fraction, OcclusionError
from lucidlab.perception.noise import ClassNoise, NoiseProfile, noisy_oracle
from lucidlab.perception.liquid import predict_liquid_and_neck

__all__ = [
    "NeckEllipse", "PerceptionEstimate", "DepthImage", "render_depth",
    "render_object", "object_masks", "ViewpointCodebook", "build_codebook",
    "estimate_pose", "occlusion_fraction", "OcclusionError", "ClassNoise",
    "NoiseProfile", "noisy_oracle", "predict_liquid_and_neck",
]
