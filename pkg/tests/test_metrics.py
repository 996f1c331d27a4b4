import numpy as np
import pytest
from numpy.testing import assert_allclose

from ddsr.depth_io import DepthMap
from ddsr.errors import DegenerateError, DimensionError
from ddsr.metrics import (
    LaplaceFit,
    MetricReport,
    evaluate_pair,
    fit_laplace,
    gradient_histogram,
    gradient_laplace_fit,
    mae,
    pooled_gradients,
    rmse,
    ssim,
)


def _gauss_window(n=11, sigma=1.5):
    ax = np.arange(n) - (n - 1) / 2.0
    g = np.exp(-(ax**2) / (2 * sigma**2))
    k = np.outer(g, g)
    return k / k.sum()


def _ssim_reference(a, b, rng_val):
    """Windowed SSIM computed with explicit loops over valid positions."""
    w = _gauss_window()
    c1 = (0.01 * rng_val) ** 2
    c2 = (0.03 * rng_val) ** 2
    h, wd = a.shape
    vals = []
    for i in range(h - 10):
        for j in range(wd - 10):
            pa = a[i : i + 11, j : j + 11]
            pb = b[i : i + 11, j : j + 11]
            mua = (w * pa).sum()
            mub = (w * pb).sum()
            va = (w * (pa - mua) ** 2).sum()
            vb = (w * (pb - mub) ** 2).sum()
            cov = (w * (pa - mua) * (pb - mub)).sum()
            vals.append(
                ((2 * mua * mub + c1) * (2 * cov + c2))
                / ((mua**2 + mub**2 + c1) * (va + vb + c2))
            )
    return float(np.mean(vals))


class TestPointMetrics:
    def test_rmse_and_mae_against_direct_formula(self):
        rng = np.random.default_rng(10)
        a, b = rng.random((9, 5)), rng.random((9, 5))
        diff = a - b
        assert_allclose(rmse(DepthMap(a), DepthMap(b)), np.sqrt(np.mean(diff**2)))
        assert_allclose(mae(DepthMap(a), DepthMap(b)), np.mean(np.abs(diff)))

    def test_constant_shift(self):
        a = np.zeros((4, 4))
        b = np.full((4, 4), 0.25)
        assert_allclose(rmse(DepthMap(a), DepthMap(b)), 0.25)
        assert_allclose(mae(DepthMap(a), DepthMap(b)), 0.25)

    def test_rmse_at_least_mae(self):
        rng = np.random.default_rng(11)
        for _ in range(20):
            a, b = rng.normal(size=(6, 6)), rng.normal(size=(6, 6))
            assert rmse(DepthMap(a), DepthMap(b)) >= mae(DepthMap(a), DepthMap(b)) - 1e-15

    def test_symmetry(self):
        rng = np.random.default_rng(12)
        a, b = rng.random((5, 5)), rng.random((5, 5))
        assert rmse(DepthMap(a), DepthMap(b)) == rmse(DepthMap(b), DepthMap(a))
        assert mae(DepthMap(a), DepthMap(b)) == mae(DepthMap(b), DepthMap(a))

    def test_shape_mismatch_rejected(self):
        with pytest.raises(DimensionError):
            rmse(DepthMap(np.ones((3, 3))), DepthMap(np.ones((3, 4))))


class TestSsim:
    def test_identical_inputs_give_one(self):
        rng = np.random.default_rng(13)
        vals = rng.random((12, 12))
        assert ssim(DepthMap(vals), DepthMap(vals.copy())) == 1.0

    def test_matches_windowed_reference(self):
        rng = np.random.default_rng(14)
        a = rng.random((14, 15))
        b = np.clip(a + rng.normal(0, 0.1, a.shape), 0, 1)
        rng_val = float(b.max() - b.min())
        got = ssim(DepthMap(a), DepthMap(b), dynamic_range=rng_val)
        assert_allclose(got, _ssim_reference(a, b, rng_val), rtol=1e-10)

    def test_noise_lowers_score(self):
        rng = np.random.default_rng(15)
        a = rng.random((16, 16))
        b = np.clip(a + rng.normal(0, 0.2, a.shape), 0, 1)
        assert ssim(DepthMap(a), DepthMap(b)) < 1.0

    def test_too_small_input_rejected(self):
        with pytest.raises(DimensionError):
            ssim(DepthMap(np.ones((8, 8))), DepthMap(np.ones((8, 8))))

    def test_zero_range_identical_is_one(self):
        a = DepthMap(np.full((11, 11), 2.0))
        assert ssim(a, DepthMap(np.full((11, 11), 2.0))) == 1.0

    def test_zero_range_differing_is_degenerate(self):
        gt = DepthMap(np.full((11, 11), 2.0))
        obs = DepthMap(np.full((11, 11), 3.0))
        with pytest.raises(DegenerateError):
            ssim(obs, gt)


class TestEvaluatePair:
    def test_report_fields_consistent(self):
        rng = np.random.default_rng(16)
        gt = DepthMap(rng.random((12, 12)))
        obs = DepthMap(np.clip(gt.values + rng.normal(0, 0.05, (12, 12)), 0, 1))
        rep = evaluate_pair(obs, gt)
        assert isinstance(rep, MetricReport)
        assert rep.n == 144
        assert_allclose(rep.rmse, rmse(obs, gt))
        assert_allclose(rep.mae, mae(obs, gt))
        assert_allclose(rep.ssim, ssim(obs, gt))


class TestLaplaceFit:
    def test_location_is_median_scale_is_mean_abs_deviation(self):
        fit = fit_laplace(np.array([-1.0, 0.0, 4.0]), bins=4)
        assert fit.location == 0.0
        assert_allclose(fit.scale, 5.0 / 3.0)

    def test_monte_carlo_laplace_samples_fit_well(self):
        rng = np.random.default_rng(17)
        samples = rng.laplace(0.0, 0.05, size=1_000_000)
        fit = fit_laplace(samples, bins=200)
        assert abs(fit.location) < 5e-4
        assert_allclose(fit.scale, 0.05, rtol=0.02)
        assert fit.fit_rmse < 5e-4

    def test_uniform_samples_fit_worse_than_laplace(self):
        rng = np.random.default_rng(18)
        lap = fit_laplace(rng.laplace(0.0, 0.05, 200_000), bins=200)
        uni = fit_laplace(rng.uniform(-0.1, 0.1, 200_000), bins=200)
        assert uni.fit_rmse > lap.fit_rmse


class TestPooledGradients:
    def test_counts_and_values(self):
        m = DepthMap(np.array([[0.0, 1.0, 2.0], [3.0, 4.0, 5.0]]))
        g = pooled_gradients([m])
        # h*(w-1) horizontal plus (h-1)*w vertical differences
        assert g.size == 2 * 2 + 1 * 3
        assert sorted(g.tolist()) == [1.0, 1.0, 1.0, 1.0, 3.0, 3.0, 3.0]

    def test_multiple_maps_concatenate(self):
        m = DepthMap(np.zeros((2, 2)))
        assert pooled_gradients([m, m]).size == 2 * (2 + 2)

    def test_degenerate_map_rejected(self):
        with pytest.raises(DimensionError):
            pooled_gradients([DepthMap(np.ones((1, 1)))])


class TestGradientHistogram:
    def test_mass_edges_and_fit_shapes(self):
        rng = np.random.default_rng(19)
        maps = [DepthMap(np.clip(rng.random((8, 8)), 0, 1)) for _ in range(4)]
        mass, edges, fit = gradient_histogram(maps, bins=50)
        assert mass.shape == (50,)
        assert edges.shape == (51,)
        assert_allclose(edges[0], -1.0)
        assert_allclose(edges[-1], 1.0)
        # gradients of [0,1] maps always land inside the edges
        assert_allclose(mass.sum(), 1.0)
        assert isinstance(fit, LaplaceFit)

    def test_fit_agrees_with_gradient_laplace_fit(self):
        rng = np.random.default_rng(20)
        maps = [DepthMap(rng.random((6, 6))) for _ in range(3)]
        _, _, fit = gradient_histogram(maps, bins=64)
        direct = gradient_laplace_fit(maps, bins=64)
        assert fit == direct
