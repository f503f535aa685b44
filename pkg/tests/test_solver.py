import numpy as np
import pytest
from hypothesis import given, strategies as st

from reflectdepth.errors import Divergence, EmptyMask
from reflectdepth.geometry import RigidPose
from reflectdepth.losses import LossConfig, WindowKernel
from reflectdepth.reprojection import ReflectionPair, reprojection_loss
from reflectdepth.solver import (DEPTH_MAX, SolverConfig, depth_from_params, loss_gradients,
                                 params_from_depth, plane_prior_pose, solve)
from tests.oracles import gradient_check, perturbed_init, synthesized_pair, textured_pair

POSE = np.array([0.02, -0.01, 0.03, 0.05, 0.3, -0.02])


def scene_pair(scene):
    return ReflectionPair.from_photo(scene.composite, scene.mask, scene.intrinsics)


@pytest.fixture(scope="module")
def solved(default_scene):
    sc = default_scene
    cfg = SolverConfig(init_pose=perturbed_init(sc))
    return sc, cfg, solve(scene_pair(sc), cfg)


class TestReparam:
    @given(st.floats(-20, 20))
    def test_round_trip(self, z):
        assert abs(float(params_from_depth(depth_from_params(z))) - z) < 1e-9 * max(1, abs(z))

    def test_far_limit(self):
        assert depth_from_params(-800.0) == pytest.approx(DEPTH_MAX, rel=1e-12)

    def test_midpoint(self):
        assert 0 < depth_from_params(0.0) < DEPTH_MAX

    @given(st.floats(-50, 50))
    def test_bounded(self, z):
        d = depth_from_params(z)
        assert 0 < d <= DEPTH_MAX


class TestGradients:
    @pytest.mark.parametrize("metric", ["passim", "ssim"])
    @pytest.mark.parametrize("cfg", [LossConfig(smoothness_weight=1e-2),
                                     LossConfig(kernel=WindowKernel(3)),
                                     LossConfig(kernel=WindowKernel(5, True), passim_variant="verbatim")],
                             ids=["smooth", "k3", "k5g-verbatim"])
    def test_finite_differences(self, metric, cfg):
        rng = np.random.default_rng(0)
        pair = textured_pair(rng)
        z = params_from_depth(5 + 3 * rng.random(pair.shape))
        r = gradient_check(pair, z, POSE, cfg, metric, n_probes=32, rng=rng)
        assert r["pose_rel"].max() < 1e-4
        assert np.mean(r["depth_rel"] < 1e-3) >= 0.99

    def test_scene_state(self, default_scene):
        sc = default_scene
        z = params_from_depth(np.clip(np.where(sc.mask == 0, sc.depth, 10), 0.2, 100))
        p = perturbed_init(sc).params()
        r = gradient_check(scene_pair(sc), z, p, LossConfig(), "passim", n_probes=32)
        assert r["pose_rel"].max() < 1e-4
        assert np.mean(r["depth_rel"] < 1e-3) >= 0.99

    def test_constant_images_zero(self):
        pair = textured_pair(np.random.default_rng(1))
        flat = ReflectionPair(np.full(pair.shape, 0.4), np.full(pair.shape, 0.3), pair.water_mask,
                              pair.intrinsics, pair.source_mask)
        z = params_from_depth(np.full(pair.shape, 4.0))
        _, gz, gp = loss_gradients(flat, z, POSE, LossConfig(smoothness_weight=0.0))
        assert not gz.any() and not gp.any()

    def test_loss_matches_reprojection_loss(self):
        pair, depth, pose = synthesized_pair(np.random.default_rng(2))
        L, _, _ = loss_gradients(pair, params_from_depth(depth), pose.params())
        assert L == pytest.approx(reprojection_loss(pair, depth, pose).total, rel=1e-12)


class TestSolve:
    def test_zero_iterations(self):
        pair, _, pose = synthesized_pair(np.random.default_rng(0))
        init = pose.retract([0.01, 0, 0, 0.01, 0, 0])
        d, p, rep = solve(pair, SolverConfig(max_iters=0, init_pose=init))
        assert len(rep.loss_trajectory) == 1 and rep.iterations == 0
        np.testing.assert_allclose(d, 10.0, rtol=1e-12)
        assert p is init or (np.array_equal(p.rotation, init.rotation)
                             and np.array_equal(p.translation, init.translation))
        assert rep.final_loss == rep.loss_trajectory[-1]

    def test_zero_iterations_init_depth(self):
        pair, depth, pose = synthesized_pair(np.random.default_rng(0))
        d, _, _ = solve(pair, SolverConfig(max_iters=0, init_pose=pose), init_depth=depth)
        np.testing.assert_allclose(d, depth, rtol=1e-9)

    @pytest.mark.parametrize("fill", [0.0, 1.0])
    def test_empty_or_full_mask(self, fill):
        pair, _, _ = synthesized_pair(np.random.default_rng(0))
        bad = ReflectionPair(pair.real_image, pair.virtual_image, np.full(pair.shape, fill),
                             pair.intrinsics, pair.source_mask)
        with pytest.raises(EmptyMask):
            solve(bad)

    def test_divergence(self):
        pair, _, _ = synthesized_pair(np.random.default_rng(0))
        with pytest.raises(Divergence):
            solve(pair, SolverConfig(init_pose=RigidPose(np.eye(3), [0, 0, -100.0])))

    def test_config_validation(self):
        with pytest.raises(ValueError):
            SolverConfig(pyramid_levels=0)
        with pytest.raises(ValueError):
            SolverConfig(pyramid_levels=7)
        with pytest.raises(ValueError):
            SolverConfig(depth_lr=0)
        with pytest.raises(ValueError):
            SolverConfig(max_iters=-1)
        with pytest.raises(ValueError):
            SolverConfig(init_depth=500)

    def test_report_invariants(self, solved):
        _, _, (depth, pose, rep) = solved
        tr = rep.loss_trajectory
        assert tr and rep.final_loss == tr[-1]
        assert len(tr) == len(rep.valid_fraction_trajectory) == len(rep.level_trajectory)
        assert rep.final_pose is pose
        assert np.all(depth > 0) and np.all(depth <= DEPTH_MAX)
        assert depth.shape == (64, 64)

    def test_monotone_within_level(self, solved):
        _, _, (_, _, rep) = solved
        tr = np.array(rep.loss_trajectory)
        lv = np.array(rep.level_trajectory)
        for level in np.unique(lv):
            seg = tr[lv == level]
            assert np.all(np.diff(seg) <= 0)

    def test_improves_on_init(self, solved):
        sc, cfg, (depth, pose, rep) = solved
        assert rep.final_loss < rep.loss_trajectory[0]
        err0 = np.linalg.norm(cfg.init_pose.translation - sc.relative_pose.translation)
        err1 = np.linalg.norm(pose.translation - sc.relative_pose.translation)
        assert err1 < err0

    def test_reaches_ground_truth_quality(self, solved):
        sc, _, (_, _, rep) = solved
        gt_depth = np.where(sc.mask == 0, sc.depth, 10.0)
        gt = reprojection_loss(scene_pair(sc), gt_depth, sc.relative_pose).total
        assert rep.final_loss <= gt + 1e-3

    def test_deterministic(self, solved):
        sc, cfg, (depth, _, rep) = solved
        d2, _, rep2 = solve(scene_pair(sc), cfg)
        assert rep2.to_dict() == rep.to_dict()
        assert np.array_equal(d2, depth)


class TestPrior:
    def test_matches_default_scene(self, default_scene):
        sc = default_scene
        T = plane_prior_pose(sc.camera_plane_distance, 6.0)
        np.testing.assert_allclose(T.matrix, sc.relative_pose.matrix, atol=1e-12)

    def test_level_camera(self):
        T = plane_prior_pose(2.0)
        # mirror 2 m below a level camera: virtual center 4 m below, i.e. +y
        from reflectdepth.geometry import invert
        np.testing.assert_allclose(invert(T).translation, [0, 4.0, 0], atol=1e-12)
        assert T.is_valid()

    def test_rejects_bad_height(self):
        with pytest.raises(ValueError):
            plane_prior_pose(0.0)
