"""Analytic liquid level and vessel-neck prediction.

Liquid height inverts the vessel cavity's volume function; the neck ellipse
is the exact conic image of the top rim circle under the pinhole camera.
"""

from __future__ import annotations

import numpy as np

from lucidlab.geometry import CameraModel, Pose6D
from lucidlab.perception.render import NEAR_PLANE, camera_pose_world
from lucidlab.perception.types import NeckEllipse
from lucidlab.shapes import (OPEN_TOP_CLASSES, SceneObject, _cavity_segments,
                             height_for_volume, rim_radius)


class UnsupportedVesselError(ValueError):
    """The object class has no open top to predict a neck for."""


def predict_liquid_and_neck(
        vessel: SceneObject, cam: CameraModel,
        robot_base_pose: Pose6D | None = None) -> tuple[float, NeckEllipse | None]:
    """(liquid fill height above cavity bottom in m, rim ellipse or None).

    The ellipse is None when the camera is on or behind the rim plane, or
    the rim is behind the near plane.
    """
    if vessel.cls not in OPEN_TOP_CLASSES:
        raise UnsupportedVesselError(f"{vessel.cls.name} has no open top")
    height = height_for_volume(vessel.shape, vessel.liquid_volume)

    rim_r = rim_radius(vessel.shape)
    rim_z = _cavity_segments(vessel.shape)[-1][1]
    center_w = vessel.pose.transform_point((0.0, 0.0, rim_z))
    normal_w = vessel.pose.rotation[:, 2]

    cam_world = camera_pose_world(cam, robot_base_pose)
    if float(np.dot(cam_world.position - center_w, normal_w)) <= 0.0:
        return height, None

    t_wc = cam_world.inverse()
    center_c = t_wc.transform_point(center_w)
    if center_c[2] < NEAR_PLANE:
        return height, None
    e1_c = t_wc.rotation @ vessel.pose.rotation[:, 0]
    e2_c = t_wc.rotation @ vessel.pose.rotation[:, 1]

    # Rim points are M @ (cos t, sin t, 1); the image conic is M^-T diag(1,1,-1) M^-1.
    m = cam.intrinsic_matrix @ np.column_stack([rim_r * e1_c, rim_r * e2_c, center_c])
    mi = np.linalg.inv(m)
    conic = mi.T @ np.diag([1.0, 1.0, -1.0]) @ mi
    return height, _conic_to_ellipse(conic)


def _conic_to_ellipse(c: np.ndarray) -> NeckEllipse | None:
    c33 = c[:2, :2]
    det33 = np.linalg.det(c33)
    if det33 <= 0:
        return None  # degenerate or hyperbolic (rim crosses the image plane)
    center = np.linalg.solve(2.0 * c33, -2.0 * c[:2, 2])
    mu = -np.linalg.det(c) / det33
    evals, evecs = np.linalg.eigh(c33)
    if mu <= 0 or np.any(mu / evals <= 0):
        return None
    axes = np.sqrt(mu / evals)
    major = int(np.argmax(axes))
    angle = float(np.arctan2(evecs[1, major], evecs[0, major]))
    if angle <= -np.pi / 2:
        angle += np.pi
    elif angle > np.pi / 2:
        angle -= np.pi
    return NeckEllipse(center=(float(center[0]), float(center[1])),
                       semi_axes=(float(axes[major]), float(axes[1 - major])),
                       angle=angle)
