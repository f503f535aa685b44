import logging

import numpy as np
import pytest
from hypothesis import given, strategies as st

from reflectdepth.errors import DegeneratePosePair
from reflectdepth.geometry import (CameraIntrinsics, RigidPose, backproject, invert, pixel_grid,
                                   reflect_pose_about_plane)
from reflectdepth.evaluation import evaluate
from reflectdepth.synth import WATER, default_scene_spec, look_camera, render
from reflectdepth.watercomplete import complete_depth, fill_water, poses_from_relative

K = CameraIntrinsics(32, 32, 15.5, 15.5)


def down_pair(height=2.0, pitch=45.0):
    real = look_camera(height, pitch)
    return real, reflect_pose_about_plane(real, WATER)


class TestComplete:
    def test_monotone_toward_horizon(self):
        real, virt = down_pair()
        mask = np.ones((32, 32))
        out = complete_depth(np.zeros((32, 32)), mask, real, virt, K)
        assert np.all(out > 0)
        # rows nearer the top of the image look further out
        assert np.all(np.diff(out, axis=0) < 0)

    def test_analytic_center(self):
        real, virt = down_pair(2.0, 45.0)
        out = complete_depth(np.zeros((32, 32)), np.ones((32, 32)), real, virt,
                             CameraIntrinsics(32, 32, 15.0, 15.0))
        # the optical axis meets the water 2 / sin(45 deg) away
        assert out[15, 15] == pytest.approx(2.0 / np.sin(np.radians(45)), rel=1e-12)

    def test_empty_mask(self, rng):
        real, virt = down_pair()
        d = rng.uniform(1, 5, (32, 32))
        out = complete_depth(d, np.zeros((32, 32)), real, virt, K)
        assert np.array_equal(out, d)

    def test_scene_exact_poses(self, default_scene):
        sc = default_scene
        out = complete_depth(np.where(sc.mask == 0, sc.depth, 0.0), sc.mask, sc.real_pose,
                             sc.virtual_pose, sc.intrinsics)
        w = sc.mask == 1
        assert evaluate(out, sc.depth, sc.mask == 0, "non_reflective", median_scale=False).abs_rel == 0
        assert np.mean(np.abs(out[w] - sc.depth[w]) / sc.depth[w]) < 0.01

    def test_scene_relative_poses(self, default_scene):
        sc = default_scene
        real, virt = poses_from_relative(sc.relative_pose)
        out = complete_depth(sc.depth, sc.mask, real, virt, sc.intrinsics)
        w = sc.mask == 1
        np.testing.assert_allclose(out[w], sc.depth[w], rtol=1e-9)

    @given(st.floats(0.3, 5.0), st.floats(5.0, 60.0), st.floats(-20, 20))
    def test_points_on_plane(self, h, pitch, yaw):
        real = look_camera(h, pitch, yaw)
        virt = reflect_pose_about_plane(real, WATER)
        mask = np.ones((32, 32))
        res = fill_water(np.zeros((32, 32)), mask, real, virt, K)
        ok = ~res.holes
        X = real.apply(backproject(K, pixel_grid(32, 32)[ok], res.depth[ok]))
        assert np.abs(res.plane.signed_distance(X)).max() < 1e-6

    def test_idempotent_and_real_untouched(self, rng):
        real, virt = down_pair()
        d = rng.uniform(1, 5, (32, 32))
        mask = (rng.random((32, 32)) > 0.5).astype(float)
        once = complete_depth(d, mask, real, virt, K)
        twice = complete_depth(once, mask, real, virt, K)
        assert np.array_equal(once, twice)
        assert np.array_equal(once[mask == 0], d[mask == 0])

    def test_holes_reported(self, caplog):
        real, virt = down_pair(1.0, 0.0)  # level camera: the upper half sees sky
        with caplog.at_level(logging.WARNING):
            res = fill_water(np.zeros((32, 32)), np.ones((32, 32)), real, virt, K)
        assert res.holes[:16].all() and not res.holes[16:].any()
        assert not res.depth[res.holes].any()
        assert "miss the plane" in caplog.text

    def test_degenerate(self):
        T = RigidPose.identity()
        with pytest.raises(DegeneratePosePair):
            complete_depth(np.ones((4, 4)), np.ones((4, 4)), T, T, K)

    def test_mask_checks(self):
        real, virt = down_pair()
        with pytest.raises(ValueError):
            complete_depth(np.ones((4, 4)), np.full((4, 4), 0.5), real, virt, K)
        with pytest.raises(ValueError):
            complete_depth(np.ones((4, 4)), np.ones((3, 4)), real, virt, K)

    def test_poses_from_relative(self, default_scene):
        real, virt = poses_from_relative(default_scene.relative_pose)
        assert np.array_equal(real.matrix, np.eye(4))
        np.testing.assert_allclose(invert(virt).matrix, default_scene.relative_pose.matrix, atol=1e-15)
