"""Perception output types shared by the estimator and the noise oracle."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from lucidlab.geometry import Frame, Pose6D


@dataclass(frozen=True)
class NeckEllipse:
    """Image-plane ellipse of a vessel's top rim: center/axes in pixels."""

    center: tuple[float, float]
    semi_axes: tuple[float, float]
    angle: float  # radians, major-axis direction in the image

    def as_array(self) -> np.ndarray:
        return np.array([*self.center, *self.semi_axes, self.angle])


@dataclass(frozen=True)
class PerceptionEstimate:
    """Per-object perception result in the ROBOT_BASE frame."""

    object_id: int
    detected: bool
    pose: Pose6D | None = None
    confidence: float = 0.0
    liquid_height: float | None = None
    neck: NeckEllipse | None = None

    def __post_init__(self):
        if self.detected:
            if self.pose is None:
                raise ValueError("detected estimates must carry a pose")
            if self.pose.frame is not Frame.ROBOT_BASE:
                raise ValueError("estimates are expressed in the robot_base frame")
        elif self.pose is not None:
            raise ValueError("undetected estimates must not carry a pose")

    @classmethod
    def missed(cls, object_id: int) -> "PerceptionEstimate":
        return cls(object_id=object_id, detected=False)
