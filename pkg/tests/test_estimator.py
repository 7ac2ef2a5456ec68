import numpy as np
import pytest

from lucidlab.geometry import Frame, Pose6D, matrix_to_quat, pose_error
from lucidlab.perception.codebook import (build_codebook, render_mesh_depth,
                                          template_camera)
from lucidlab.perception.estimator import (OcclusionError, estimate_pose,
                                           occlusion_fraction, occlusion_fractions)
from lucidlab.perception.render import DepthImage, render_object
from lucidlab.shapes import (Box, ObjectClass, SceneObject, ShapeModel, ShapePart,
                             default_shape, tessellate)


@pytest.fixture(scope="module")
def pipette_setup():
    shape = default_shape(ObjectClass.PIPETTE)
    cb = build_codebook(shape, 15.0, 0.40, ObjectClass.PIPETTE)
    mesh = tessellate(shape, 16)
    center = 0.5 * (mesh.vertices.min(0) + mesh.vertices.max(0))
    return shape, cb, mesh.triangles(), center


class TestEstimatePose:
    def test_self_retrieval_at_codebook_viewpoints(self, pipette_setup):
        shape, cb, tris, _ = pipette_setup
        cam = template_camera()
        for k in (0, len(cb.entries) // 2, len(cb.entries) - 1):
            e = cb.entries[k]
            depth = render_mesh_depth(tris, e.rotation, e.translation, cam)
            est = estimate_pose(DepthImage(depth, cam), depth > 0, cb, 1)
            assert est.detected
            truth = Pose6D(e.translation, matrix_to_quat(e.rotation),
                           Frame.ROBOT_BASE)
            err = pose_error(est.pose, truth, shape.symmetry)
            assert err.angle_deg <= 1.5       # in-plane step + refinement
            assert err.position_cm <= 0.4     # ~1 pixel back-projection

    def test_random_pose_bounds_smoke(self, pipette_setup, rng):
        shape, cb, tris, center = pipette_setup
        cam = template_camera()
        rots, poss = [], []
        for _ in range(12):
            a = rng.normal(size=3)
            a /= np.linalg.norm(a)
            from lucidlab.geometry import quat_from_axis_angle, quat_to_matrix
            r = quat_to_matrix(quat_from_axis_angle(a, rng.uniform(0, np.pi)))
            t = np.array([rng.uniform(-0.03, 0.03), rng.uniform(-0.03, 0.03),
                          rng.uniform(0.35, 0.5)]) - r @ center
            depth = render_mesh_depth(tris, r, t, cam)
            est = estimate_pose(DepthImage(depth, cam), depth > 0, cb, 1)
            assert est.detected
            err = pose_error(est.pose, Pose6D(t, matrix_to_quat(r),
                                              Frame.ROBOT_BASE), shape.symmetry)
            rots.append(err.angle_deg)
            poss.append(err.position_cm)
        assert np.median(rots) <= 2 * cb.angular_spacing
        assert np.median(poss) <= 1.0

    def test_empty_mask_missed(self, pipette_setup):
        _, cb, tris, _ = pipette_setup
        cam = template_camera()
        e = cb.entries[0]
        depth = render_mesh_depth(tris, e.rotation, e.translation, cam)
        est = estimate_pose(DepthImage(depth, cam),
                            np.zeros_like(depth, dtype=bool), cb, 1)
        assert not est.detected and est.pose is None

    def test_sparse_depth_missed(self, pipette_setup):
        _, cb, tris, _ = pipette_setup
        cam = template_camera()
        e = cb.entries[0]
        depth = render_mesh_depth(tris, e.rotation, e.translation, cam)
        mask = np.ones_like(depth, dtype=bool)  # mostly pixels with no depth
        est = estimate_pose(DepthImage(depth, cam), mask, cb, 1)
        assert not est.detected

    def test_output_frame_uses_extrinsics(self, pipette_setup):
        shape, cb, tris, _ = pipette_setup
        base_cam = template_camera()
        extr = Pose6D.from_translation((0.1, 0.2, 0.3), Frame.ROBOT_BASE)
        cam = type(base_cam)(fx=base_cam.fx, fy=base_cam.fy, cx=base_cam.cx,
                             cy=base_cam.cy, width=base_cam.width,
                             height=base_cam.height, extrinsics=extr)
        e = cb.entries[3]
        depth = render_mesh_depth(tris, e.rotation, e.translation, cam)
        est = estimate_pose(DepthImage(depth, cam), depth > 0, cb, 1)
        assert est.pose.frame is Frame.ROBOT_BASE
        np.testing.assert_allclose(est.pose.position,
                                   e.translation + np.array([0.1, 0.2, 0.3]),
                                   atol=5e-3)


def _obj(oid, cls, position):
    return SceneObject(oid, cls, default_shape(cls),
                       Pose6D.from_translation(position))


def _wall(oid, position, size=(0.5, 0.5, 0.5)):
    shape = ShapeModel((ShapePart(Box(*size)),))
    return SceneObject(oid, ObjectClass.RACK_6, shape,
                       Pose6D.from_translation(position))


class TestOcclusion:
    def _cam(self):
        from lucidlab.geometry import CameraModel
        return CameraModel(110.0, 110.0, 48.0, 36.0, 96, 72)

    def test_single_object_zero(self):
        target = _obj(1, ObjectClass.BEAKER, (0, 0, 0.8))
        assert occlusion_fraction(target, [target], self._cam()) == 0.0

    def test_fully_hidden_is_one(self):
        target = _obj(1, ObjectClass.TEST_TUBE, (0, 0, 1.2))
        wall = _wall(2, (0.0, 0.0, 0.6), size=(0.5, 0.5, 0.2))
        assert occlusion_fraction(target, [target, wall], self._cam()) == 1.0

    def test_half_covered_matches_pixel_count_oracle(self):
        cam = self._cam()
        target = _obj(1, ObjectClass.BEAKER, (0.0, 0.0, 0.9))
        occluder = _wall(2, (0.0, -0.3, 0.55), size=(0.08, 0.6, 0.25))
        measured = occlusion_fraction(target, [target, occluder], cam)
        # oracle: direct pixel counting on the two renders
        alone = render_object(target, cam).data
        occ = render_object(occluder, cam).data
        both_visible = (alone > 0) & ~((occ > 0) & (occ < alone))
        expected = 1.0 - both_visible.sum() / (alone > 0).sum()
        assert measured == pytest.approx(expected, abs=1e-12)
        assert 0.1 < measured < 0.9

    def test_outside_frustum_raises(self):
        target = _obj(1, ObjectClass.BEAKER, (5.0, 0.0, -1.0))
        other = _obj(2, ObjectClass.BEAKER, (0, 0, 0.8))
        with pytest.raises(OcclusionError):
            occlusion_fraction(target, [target, other], self._cam())

    def test_not_in_scene_rejected(self):
        target = _obj(1, ObjectClass.BEAKER, (0, 0, 0.8))
        with pytest.raises(ValueError):
            occlusion_fraction(target, [_obj(2, ObjectClass.BEAKER, (0, 0, 0.8))],
                               self._cam())

    def test_monotone_in_occluders(self):
        cam = self._cam()
        target = _obj(1, ObjectClass.BEAKER, (0.0, 0.0, 0.9))
        o1 = _wall(2, (0.0, -0.32, 0.55), size=(0.06, 0.6, 0.25))
        o2 = _wall(3, (-0.09, -0.32, 0.55), size=(0.06, 0.6, 0.25))
        f1 = occlusion_fraction(target, [target, o1], cam)
        f2 = occlusion_fraction(target, [target, o1, o2], cam)
        assert f2 >= f1 >= 0.0

    def test_batch_matches_single(self):
        cam = self._cam()
        objs = [_obj(1, ObjectClass.BEAKER, (0.0, 0.0, 0.9)),
                _wall(2, (0.0, -0.3, 0.55), size=(0.08, 0.6, 0.25))]
        batch = occlusion_fractions(objs, cam)
        assert batch[1] == pytest.approx(
            occlusion_fraction(objs[0], objs, cam), abs=1e-12)
