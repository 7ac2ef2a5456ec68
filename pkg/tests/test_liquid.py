import numpy as np
import pytest

from lucidlab.geometry import CameraModel, Frame, Pose6D
from lucidlab.perception.liquid import UnsupportedVesselError, predict_liquid_and_neck
from lucidlab.scene import camera_look_at
from lucidlab.shapes import (Cylinder, ObjectClass, SceneObject, ShapeModel,
                             ShapePart, default_shape)


def vessel(radius=0.02, height=0.10, volume=50.0, position=(0, 0, 0),
           quat=(1, 0, 0, 0)):
    shape = ShapeModel((ShapePart(Cylinder(radius, height)),))
    return SceneObject(2, ObjectClass.BEAKER, shape,
                       Pose6D(np.asarray(position, float), np.asarray(quat, float)),
                       liquid_volume=volume, liquid_capacity=200.0)


def camera_at(eye, target):
    pose = camera_look_at(eye, target, Frame.WORLD)
    return CameraModel(120.0, 120.0, 64.0, 48.0, 128, 96,
                       extrinsics=pose.retag(Frame.ROBOT_BASE))


def fit_ellipse_lsq(points):
    """Independent oracle: algebraic conic fit of projected rim points."""
    x, y = points[:, 0], points[:, 1]
    design = np.column_stack([x * x, x * y, y * y, x, y, np.ones_like(x)])
    _, _, vt = np.linalg.svd(design)
    a, b, c, d, e, f = vt[-1]
    m = np.array([[a, b / 2, d / 2], [b / 2, c, e / 2], [d / 2, e / 2, f]])
    c33 = m[:2, :2]
    center = np.linalg.solve(2 * c33, -2 * m[:2, 2])
    mu = -np.linalg.det(m) / np.linalg.det(c33)
    evals, evecs = np.linalg.eigh(c33)
    axes = np.sqrt(mu / evals)
    major = int(np.argmax(axes))
    angle = float(np.arctan2(evecs[1, major], evecs[0, major]))
    if angle <= -np.pi / 2:
        angle += np.pi
    elif angle > np.pi / 2:
        angle -= np.pi
    return center, np.array([axes[major], axes[1 - major]]), angle


class TestLiquidHeight:
    def test_cylinder_formula(self):
        cam = camera_at((0.3, 0, 0.4), (0, 0, 0.05))
        height, _ = predict_liquid_and_neck(vessel(), cam)
        assert height == pytest.approx(50e-6 / (np.pi * 0.02 ** 2), abs=1e-9)

    def test_closed_class_rejected(self):
        rack = SceneObject(6, ObjectClass.RACK_6, default_shape(ObjectClass.RACK_6),
                           Pose6D.identity())
        cam = camera_at((0.3, 0, 0.4), (0, 0, 0))
        with pytest.raises(UnsupportedVesselError):
            predict_liquid_and_neck(rack, cam)


class TestNeckEllipse:
    def test_top_down_is_circle(self):
        cam = camera_at((0.0, 1e-4, 0.60), (0.0, 0.0, 0.0))
        _, neck = predict_liquid_and_neck(vessel(), cam)
        assert neck is not None
        assert neck.semi_axes[0] == pytest.approx(neck.semi_axes[1], abs=1e-6)

    def test_oblique_matches_point_projection_oracle(self):
        v = vessel(radius=0.02, height=0.10, position=(0.4, 0.0, 0.0))
        rim_center = np.array([0.4, 0.0, 0.10])
        eye = rim_center + np.array([-0.283, 0.0, 0.283])  # 45 deg, 40 cm away
        cam = camera_at(eye, rim_center)
        _, neck = predict_liquid_and_neck(v, cam)
        assert neck is not None

        # oracle: project 360 rim points and fit the conic
        t = np.linspace(0, 2 * np.pi, 360, endpoint=False)
        rim_world = np.column_stack([0.4 + 0.02 * np.cos(t), 0.02 * np.sin(t),
                                     np.full_like(t, 0.10)])
        cam_world = camera_look_at(eye, rim_center, Frame.WORLD)
        pts_cam = cam_world.inverse().transform_points(rim_world)
        uv = cam.project(pts_cam)
        center, axes, angle = fit_ellipse_lsq(uv)

        np.testing.assert_allclose(neck.center, center, atol=1e-6)
        np.testing.assert_allclose(neck.semi_axes, axes, atol=1e-6)
        assert abs(neck.angle - angle) < 1e-6 or \
            abs(abs(neck.angle - angle) - np.pi) < 1e-6

    def test_camera_below_rim_plane_absent(self):
        cam = camera_at((0.3, 0.0, 0.02), (0.0, 0.0, 0.05))
        _, neck = predict_liquid_and_neck(vessel(), cam)
        assert neck is None

    def test_tilted_vessel_still_projects(self):
        quat = Pose6D.from_rpy(0.4, 0.2, 0.0).quat
        v = vessel(position=(0.4, 0.0, 0.0), quat=tuple(quat))
        cam = camera_at((0.0, 0.0, 0.5), (0.4, 0.0, 0.05))
        _, neck = predict_liquid_and_neck(v, cam)
        assert neck is not None
        assert neck.semi_axes[0] >= neck.semi_axes[1] > 0
