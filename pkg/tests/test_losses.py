import numpy as np
import pytest
from hypothesis import assume, given, strategies as st
from hypothesis.extra.numpy import arrays

from reflectdepth.errors import EmptyRegion
from reflectdepth.losses import (LossConfig, WindowKernel, dice_coefficient, dice_loss,
                                 edge_aware_smoothness, metric_map, passim, pe, pe_map, smooth_l1,
                                 ssim, structural_term, window_stats)
from tests.oracles import (brute_metric_map, contrast_structure, kernel_weights, passim_ref,
                           patch_moments, smooth_texture, ssim_ref)

patch = arrays(np.float64, (5, 5), elements=st.floats(0.1, 1.0))
TINY = LossConfig(epsilon=1e-12)


def textured(rng, size=5, lo=0.2, hi=0.9):
    return rng.uniform(lo, hi, size=(size, size))


class TestKernel:
    @pytest.mark.parametrize("size", [3, 5, 7])
    @pytest.mark.parametrize("gaussian", [False, True])
    def test_weights(self, size, gaussian):
        w = WindowKernel(size, gaussian).weights
        assert w.shape == (size, size) and np.all(w >= 0)
        assert abs(w.sum() - 1) < 1e-9
        np.testing.assert_allclose(w, kernel_weights(size, gaussian), atol=1e-15)
        if not gaussian:
            assert np.all(w == w[0, 0])

    @pytest.mark.parametrize("size", [1, 2, 4])
    def test_rejects_bad_size(self, size):
        with pytest.raises(ValueError):
            WindowKernel(size)

    def test_config_validation(self):
        with pytest.raises(ValueError):
            LossConfig(alpha=1.5)
        with pytest.raises(ValueError):
            LossConfig(epsilon=0)
        with pytest.raises(ValueError):
            LossConfig(smoothness_weight=-1)
        with pytest.raises(ValueError):
            LossConfig(passim_variant="other")

    def test_defaults(self):
        c = LossConfig()
        assert (c.alpha, c.epsilon, c.kernel.size, c.kernel.gaussian, c.passim_variant) == \
            (0.75, 1e-4, 5, False, "rescaled")


class TestWindowStats:
    def test_constant(self):
        s = window_stats(np.full((5, 5), 0.4), np.full((5, 5), 0.7), WindowKernel())
        assert s.mu_x == pytest.approx(0.4) and s.mu_y == pytest.approx(0.7)
        assert s.sigma_x < 1e-8 and s.sigma_y < 1e-8 and abs(s.sigma_xy) < 1e-15

    @given(patch)
    def test_self_covariance(self, x):
        s = window_stats(x, x, WindowKernel())
        assert abs(s.sigma_xy - s.sigma_x**2) < 1e-9

    @given(patch, patch, st.booleans())
    def test_brute_force(self, x, y, gaussian):
        k = WindowKernel(5, gaussian)
        s = window_stats(x, y, k)
        mx, my, vx, vy, cxy = patch_moments(x, y, k.weights)
        np.testing.assert_allclose([s.mu_x, s.mu_y, s.sigma_x, s.sigma_y, s.sigma_xy],
                                   [mx, my, np.sqrt(vx), np.sqrt(vy), cxy], atol=1e-9)
        assert s.sigma_x >= 0 and s.sigma_y >= 0
        assert abs(s.sigma_xy) <= s.sigma_x * s.sigma_y + 1e-9

    def test_size_mismatch(self):
        with pytest.raises(ValueError):
            window_stats(np.ones((3, 3)), np.ones((3, 3)), WindowKernel(5))


class TestPassim:
    def test_identity(self, rng):
        x = textured(rng)
        assert abs(passim(x, x) - 1) < 1e-3

    def test_proportional_attenuation(self, rng):
        x = textured(rng)
        assert abs(passim(x, 0.6 * x) - passim(x, x)) < 1e-6

    def test_anticorrelated_matches_contrast_structure(self, rng):
        x = textured(rng)
        my = 0.5
        y = my - (x - x.mean())
        w = WindowKernel().weights
        score = passim(x, y, TINY)
        assert score < 0
        assert abs(score - contrast_structure(x, y, w)) < 1e-9

    @given(patch, patch)
    def test_rescaled_is_contrast_structure(self, x, y):
        w = WindowKernel().weights
        s = window_stats(x, y, WindowKernel())
        assume(s.sigma_x > 1e-3 and s.sigma_y > 1e-3)
        assert abs(passim(x, y, TINY) - contrast_structure(x, y, w)) < 1e-6

    @given(patch, patch, st.floats(0.1, 10), st.floats(0.1, 10),
           st.sampled_from(["rescaled", "verbatim"]))
    def test_independent_scaling(self, x, y, s, t, variant):
        # exact in the eps -> 0 limit; the deviation at finite eps is bounded below
        cfg = LossConfig(epsilon=1e-15, passim_variant=variant)
        st_ = window_stats(x, y, WindowKernel())
        assume(st_.sigma_x > 1e-3 and st_.sigma_y > 1e-3)
        assert abs(passim(s * x, t * y, cfg) - passim(x, y, cfg)) < 1e-6

    @given(patch, patch, st.floats(0.1, 10), st.floats(0.1, 10))
    def test_scaling_error_bound_default_eps(self, x, y, s, t):
        # (aN + e)/(aD + e) moves from N/D by at most e|1 - N/D| / (min(a, 1) D)
        cfg = LossConfig()
        m = window_stats(x, y, WindowKernel())
        D = m.sigma_x**2 * m.mu_y**2 + m.sigma_y**2 * m.mu_x**2
        assume(D > 1e-8)
        M0 = 2 * m.mu_x * m.mu_y * m.sigma_xy / D
        a = (s * t) ** 2
        bound = 2 * cfg.epsilon * abs(1 - M0) / (min(a, 1.0) * D)
        assert abs(passim(s * x, t * y, cfg) - passim(x, y, cfg)) <= bound + 1e-12

    @given(patch)
    def test_identity_property(self, x):
        s = window_stats(x, x, WindowKernel())
        assume(s.sigma_x >= 0.01 and s.mu_x >= 0.1)
        assert abs(passim(x, x) - 1) < 1e-3

    @given(patch, patch)
    def test_verbatim_is_half(self, x, y):
        s = window_stats(x, y, WindowKernel())
        assume(s.sigma_x > 1e-3 and s.sigma_y > 1e-3)
        half = passim(x, y, LossConfig(epsilon=1e-12, passim_variant="verbatim"))
        assert abs(half - 0.5 * passim(x, y, TINY)) < 1e-6

    @given(patch, patch)
    def test_bounded(self, x, y):
        s = window_stats(x, y, WindowKernel())
        assume(s.sigma_x > 1e-4 and s.sigma_y > 1e-4)
        assert abs(passim(x, y, TINY)) <= 1 + 1e-6

    def test_verbatim_identity_is_half(self, rng):
        x = textured(rng)
        assert abs(passim(x, x, LossConfig(epsilon=1e-12, passim_variant="verbatim")) - 0.5) < 1e-9

    def test_epsilon_sensitivity_on_texture(self, rng):
        x = textured(rng)
        y = np.clip(x + rng.normal(scale=0.05, size=x.shape), 0, 1)
        assert abs(passim(x, y) - passim(x, y, TINY)) < 1e-2


class TestSsim:
    @given(patch)
    def test_identity(self, x):
        assert abs(ssim(x, x) - 1) < 1e-9

    def test_attenuation_penalized(self, rng):
        x = textured(rng)
        assert ssim(x, 0.6 * x) < 1

    @given(patch, st.floats(0.2, 0.95))
    def test_scaling_below_one(self, x, s):
        assert ssim(x, s * x) < 1

    @given(patch, patch)
    def test_brute_force(self, x, y):
        w = WindowKernel().weights
        assert abs(ssim(x, y) - ssim_ref(*patch_moments(x, y, w))) < 1e-9
        assert abs(passim(x, y) - passim_ref(*patch_moments(x, y, w), 1e-4)) < 1e-9


class TestFullImageMaps:
    @pytest.mark.parametrize("metric", ["passim", "ssim"])
    @pytest.mark.parametrize("size,gaussian", [(3, False), (5, False), (5, True)])
    def test_brute_force(self, metric, size, gaussian):
        rng = np.random.default_rng(size)
        x = smooth_texture(rng, 14, 17)
        y = np.clip(0.7 * x + rng.normal(scale=0.03, size=x.shape), 0, 1)
        cfg = LossConfig(kernel=WindowKernel(size, gaussian))
        fast = metric_map(x, y, cfg, metric)
        ref = brute_metric_map(x, y, size, gaussian, metric)
        assert np.abs(fast - ref).max() < 1e-9

    @pytest.mark.parametrize("metric", ["passim", "ssim"])
    def test_brute_force_masked(self, metric):
        rng = np.random.default_rng(7)
        x = smooth_texture(rng, 12, 12)
        y = smooth_texture(rng, 12, 12)
        valid = rng.random((12, 12)) > 0.3
        fast = metric_map(x, y, LossConfig(), metric, valid)
        ref = brute_metric_map(x, y, 5, False, metric, valid=valid)
        assert np.abs(fast - ref).max() < 1e-9

    def test_attenuation_over_image(self):
        rng = np.random.default_rng(3)
        x = smooth_texture(rng, 20, 20)
        base_p = metric_map(x, x, LossConfig(), "passim")
        base_s = metric_map(x, x, LossConfig(), "ssim")
        prev = base_s.mean()
        for rho in (0.9, 0.7, 0.5):
            assert np.abs(metric_map(x, rho * x, LossConfig(), "passim") - base_p).max() < 1e-6
            cur = metric_map(x, rho * x, LossConfig(), "ssim").mean()
            assert cur < prev
            prev = cur

    def test_unknown_metric(self):
        with pytest.raises(ValueError):
            metric_map(np.ones((5, 5)), np.ones((5, 5)), LossConfig(), "mse")


class TestSmoothL1:
    def test_values(self):
        assert smooth_l1(0.3, 0.3) == 0
        assert smooth_l1(0.0, 2.0) == 1.5
        assert smooth_l1(0.0, 1.0) == 0.5
        assert np.nextafter(1.0, 0) ** 2 * 0.5 == pytest.approx(smooth_l1(0.0, np.nextafter(1.0, 0)))

    @given(st.floats(-5, 5), st.floats(-5, 5))
    def test_symmetric_nonnegative(self, a, b):
        assert smooth_l1(a, b) == smooth_l1(b, a) >= 0


class TestPe:
    def test_identical(self, rng):
        x = textured(rng)
        assert 0 <= pe(x, x) < 1e-3

    def test_alpha_zero(self, rng):
        x, y = textured(rng), textured(rng)
        assert pe(x, y, LossConfig(alpha=0.0)) == pytest.approx(np.mean(smooth_l1(x, y)), abs=0)

    def test_forced_arithmetic(self):
        assert structural_term(0.84, 0.75) + 0.25 * 0.02 == pytest.approx(0.155, abs=1e-12)

    @given(patch, patch, st.floats(0, 1), st.sampled_from(["passim", "ssim"]))
    def test_nonnegative(self, x, y, alpha, metric):
        assert pe(x, y, LossConfig(alpha=alpha), metric) >= 0

    def test_clamp(self):
        assert structural_term(-5.0, 1.0) == pytest.approx(0.5 * np.sqrt(2))
        assert structural_term(1.5, 1.0) == 0

    def test_map_nonnegative_and_masked(self, rng):
        x = smooth_texture(rng, 10, 10)
        y = smooth_texture(rng, 10, 10)
        valid = rng.random((10, 10)) > 0.5
        m = pe_map(x, y, LossConfig(), "passim", valid)
        assert np.all(m >= 0) and not m[~valid].any()


class TestDice:
    def test_identical(self):
        p = np.zeros((6, 6))
        p[1:4, 2:5] = 1
        assert dice_coefficient(p, p) == 1
        assert abs(dice_loss(p, p)) < 1e-9

    def test_disjoint(self):
        p = np.zeros((4, 4))
        g = np.zeros((4, 4))
        p[:2] = 1
        g[2:] = 1
        assert dice_coefficient(p, g) == 0
        assert dice_loss(p, g) == pytest.approx(1, abs=1e-4)

    def test_half_overlap(self):
        # equal areas of 3 sharing 2 pixels: intersection is half the union
        p = np.zeros((1, 4))
        g = np.zeros((1, 4))
        p[0, :3] = 1
        g[0, 1:] = 1
        assert dice_coefficient(p, g) == pytest.approx(2 / 3)

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            dice_coefficient(np.ones((2, 2)), np.ones((3, 2)))
        with pytest.raises(ValueError):
            dice_loss(np.ones((2, 2)), np.ones((3, 2)))

    @given(arrays(np.float64, (5, 5), elements=st.floats(0, 1)),
           arrays(np.bool_, (5, 5)))
    def test_symmetric_bounded(self, p, g):
        g = g.astype(float)
        d = dice_coefficient(p, g)
        assert d == pytest.approx(dice_coefficient(g, p))
        assert 0 <= d <= 1 + 1e-12


class TestSmoothness:
    def test_constant_depth(self, rng):
        assert edge_aware_smoothness(np.full((6, 6), 3.0), rng.random((6, 6))) == 0

    def test_ramp_constant_image(self):
        depth = 1.0 + np.tile(np.arange(8.0), (6, 1))
        q = 1.0 / depth
        qs = q / q.mean()
        dx = np.abs(np.diff(qs, axis=1)).sum()
        expected = dx / q.size
        assert edge_aware_smoothness(depth, np.full((6, 8), 0.5)) == pytest.approx(expected, rel=1e-12)

    def test_edges_reduce(self):
        depth = 1.0 + np.tile(np.arange(8.0), (6, 1))
        edge = np.tile((np.arange(8) % 2).astype(float), (6, 1))
        assert edge_aware_smoothness(depth, edge) < edge_aware_smoothness(depth, np.zeros((6, 8)))

    def test_scale_invariant(self, rng):
        depth = rng.uniform(1, 5, size=(6, 6))
        img = rng.random((6, 6))
        assert edge_aware_smoothness(3 * depth, img) == pytest.approx(edge_aware_smoothness(depth, img))

    def test_empty(self):
        with pytest.raises(EmptyRegion):
            edge_aware_smoothness(np.ones((3, 3)), np.ones((3, 3)), np.zeros((3, 3)))
