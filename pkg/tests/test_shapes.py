import numpy as np
import pytest

from lucidlab.geometry import Frame, Pose6D, Symmetry
from lucidlab.shapes import (Box, ConeFrustum, Cylinder, ObjectClass, SceneObject,
                             ShapeError, ShapeModel, ShapePart, default_shape,
                             footprint_radius, height_for_volume, is_watertight,
                             rim_radius, tessellate, volume_at_height,
                             width_at_height)


def simple(prim):
    return ShapeModel((ShapePart(prim),))


class TestTessellation:
    def test_cylinder_triangle_count(self):
        mesh = tessellate(simple(Cylinder(1.0, 1.0)), 8)
        assert len(mesh.faces) == 32  # 4n by construction

    def test_box_always_12(self):
        for res in (8, 16, 64):
            assert len(tessellate(simple(Box(0.1, 0.2, 0.3)), res).faces) == 12

    def test_degenerate_frustum_equals_cylinder(self):
        cyl = tessellate(simple(Cylinder(1.0, 1.0)), 16)
        fru = tessellate(simple(ConeFrustum(1.0, 1.0, 1.0)), 16)
        np.testing.assert_array_equal(cyl.vertices, fru.vertices)
        np.testing.assert_array_equal(cyl.faces, fru.faces)

    def test_linear_vertex_growth(self):
        counts = [len(tessellate(simple(Cylinder(1, 1)), n).vertices)
                  for n in (8, 16, 32)]
        assert counts == [2 * 8 + 2, 2 * 16 + 2, 2 * 32 + 2]

    def test_resolution_floor(self):
        with pytest.raises(ShapeError):
            tessellate(simple(Cylinder(1, 1)), 4)

    def test_degenerate_dimensions(self):
        with pytest.raises(ShapeError):
            tessellate(simple(Cylinder(0.0, 1.0)), 8)
        with pytest.raises(ShapeError):
            ShapeModel((ShapePart(Box(0.1, -0.1, 0.1)),))

    @pytest.mark.parametrize("cls", list(ObjectClass))
    @pytest.mark.parametrize("res", [8, 16, 32, 64])
    def test_watertight_all_classes(self, cls, res):
        assert is_watertight(tessellate(default_shape(cls), res))

    def test_part_pose_applied(self):
        part = ShapePart(Box(0.1, 0.1, 0.1),
                         Pose6D.from_translation((0, 0, 0.5), Frame.OBJECT))
        mesh = tessellate(ShapeModel((part,)), 8)
        assert mesh.vertices[:, 2].min() == pytest.approx(0.5)


class TestLiquidGeometry:
    def test_cylinder_height_formula(self):
        # V = pi r^2 h: 50 ml in a 2 cm radius cylinder -> 50/(4 pi) cm
        shape = simple(Cylinder(0.02, 0.10))
        h = height_for_volume(shape, 50.0)
        assert h == pytest.approx(50e-6 / (np.pi * 0.02 ** 2), abs=1e-9)

    @pytest.mark.parametrize("cls", [ObjectClass.FLASK, ObjectClass.BEAKER,
                                     ObjectClass.GRADUATED_CYLINDER,
                                     ObjectClass.TEST_TUBE])
    def test_volume_height_inverse(self, cls, rng):
        shape = default_shape(cls)
        vmax = volume_at_height(shape, 1.0)
        for v in rng.uniform(0.0, vmax, size=100):
            h = height_for_volume(shape, float(v))
            assert volume_at_height(shape, h) == pytest.approx(v, abs=1e-9)

    def test_over_capacity_raises(self):
        with pytest.raises(ShapeError):
            height_for_volume(simple(Cylinder(0.01, 0.05)), 1e6)

    def test_rim_radius_uses_opening(self):
        solid = simple(Cylinder(0.03, 0.075))
        cup = simple(Cylinder(0.03, 0.075, wall=0.0025))
        assert rim_radius(solid) == pytest.approx(0.03)
        assert rim_radius(cup) == pytest.approx(0.0275)


class TestShapeQueries:
    def test_footprint_radius_cylinder(self):
        assert footprint_radius(simple(Cylinder(0.03, 0.075))) == pytest.approx(0.03)

    def test_width_at_height(self):
        shape = default_shape(ObjectClass.PIPETTE)
        assert width_at_height(shape, 0.05) == pytest.approx(0.010)  # body
        assert width_at_height(shape, 0.145) >= 0.022                # bulb level

    def test_width_outside_raises(self):
        with pytest.raises(ShapeError):
            width_at_height(simple(Cylinder(0.01, 0.05)), 0.2)


class TestSceneObject:
    def test_liquid_invariant(self):
        shape = default_shape(ObjectClass.BEAKER)
        with pytest.raises(ValueError):
            SceneObject(1, ObjectClass.BEAKER, shape, Pose6D.identity(),
                        liquid_volume=300.0, liquid_capacity=200.0)

    def test_requires_world_pose(self):
        shape = default_shape(ObjectClass.BEAKER)
        with pytest.raises(ValueError):
            SceneObject(1, ObjectClass.BEAKER, shape,
                        Pose6D.identity(Frame.CAMERA))
