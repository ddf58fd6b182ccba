import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from agg_density._errors import UnsupportedCapabilityError
from agg_density.densities import GaussianMixture, get_density, standard_gaussian
from agg_density.kde import (
    KernelSum,
    bandwidth_equation_residual,
    bandwidth_grid,
    fit_kde,
    fourier_mise,
    kde_eval,
    kde_eval_batch,
    kde_loo_eval,
    minimax_quantities,
    pinsker_constant,
    pinsker_optimal_bandwidth,
    sobolev_functional,
    split_sizes,
)
from agg_density.kernels import GaussianKernel, PinskerKernel, SilvermanKernel, SincKernel
from oracles import gl_pieces, naive_kde, naive_loo, bandwidth_grid_script, pinsker_constant_mp, quad_mise_gauss

G = GaussianKernel()
phi = lambda u: math.exp(-0.5 * u * u) / math.sqrt(2 * math.pi)


class TestFit:
    def test_single_bump(self):
        assert kde_eval(fit_kde([0.0], 1.0, G), 0.0) == pytest.approx(1 / math.sqrt(2 * math.pi))

    def test_two_points(self):
        assert kde_eval(fit_kde([-1.0, 1.0], 1.0, G), 0.0) == pytest.approx(phi(1.0), rel=1e-15)

    @pytest.mark.parametrize("h", [0.0, -1.0])
    def test_bad_bandwidth(self, h):
        with pytest.raises(ValueError):
            fit_kde([0.0, 1.0], h, G)

    def test_empty(self):
        with pytest.raises(ValueError):
            fit_kde(np.empty((0, 1)), 1.0, G)

    def test_not_spatially_evaluable(self):
        with pytest.raises(UnsupportedCapabilityError):
            fit_kde(np.zeros((3, 2)), 1.0, PinskerKernel(2.0, 2))

    def test_matches_naive_sum(self, rng):
        x = rng.normal(size=30)
        e = fit_kde(x, 0.37, SilvermanKernel())
        for v in (-1.3, 0.0, 0.4, 2.2):
            assert kde_eval(e, v) == pytest.approx(naive_kde(x, 0.37, SilvermanKernel().evaluate, v), rel=1e-12)

    def test_two_dimensional(self, rng):
        x = rng.normal(size=(15, 2))
        e = fit_kde(x, 0.5, GaussianKernel(2))
        q = np.array([0.1, -0.2])
        ref = np.mean([math.exp(-0.5 * np.sum(((xi - q) / 0.5) ** 2)) / (2 * math.pi) for xi in x]) / 0.25
        assert e.evaluate(q) == pytest.approx(ref, rel=1e-13)

    @pytest.mark.parametrize("kernel,half", [(SilvermanKernel(), 60.0), (PinskerKernel(2.0), 200.0)],
                             ids=["silverman", "pinsker"])
    def test_mass_heavy_kernels(self, kernel, half, rng):
        e = fit_kde(rng.normal(size=40), 0.3, kernel)
        assert abs(gl_pieces(e.evaluate, -half, half, width=0.02) - 1.0) <= 1e-3

    def test_gaussian_mass_over_window(self, rng):
        for seed in range(5):
            x = standard_gaussian().sample(50, seed)
            e = fit_kde(x, [0.05, 0.2, 0.5, 1.0, 0.3][seed], G)
            lo, hi = standard_gaussian().support_window()[0]
            # the window is widened by the bump width so no KDE mass is cut off
            mass = gl_pieces(e.evaluate, lo - 8, hi + 8, width=0.01)
            assert abs(mass - 1.0) <= 1e-4


class TestBatch:
    def test_batch_equals_pointwise_loop(self, rng):
        x = rng.normal(size=200)
        e = fit_kde(x, 0.2, G)
        grid = np.linspace(-4, 4, 999)
        batch = kde_eval_batch(e, grid)
        loop = np.array([kde_eval(e, v) for v in grid])
        assert np.max(np.abs(batch - loop)) <= 1e-12

    def test_chunking_is_invisible(self, rng, monkeypatch):
        import agg_density.kde as kde_mod

        x = rng.normal(size=300)
        e = fit_kde(x, 0.25, G)
        grid = np.linspace(-3, 3, 501)
        full = e.evaluate(grid)
        monkeypatch.setattr(kde_mod, "_EVAL_CHUNK", 700)
        assert np.max(np.abs(e.evaluate(grid) - full)) <= 1e-12


class TestLeaveOneOut:
    def test_equal_points(self):
        e = fit_kde([0.3, 0.3], 1.0, G)
        assert kde_loo_eval(e, 0) == pytest.approx(G.value_at_zero(), rel=1e-15)

    def test_full_sum_identity(self, rng):
        x = rng.normal(size=25)
        h, m = 0.4, 25
        e = fit_kde(x, h, G)
        for i in range(m):
            ident = (m * kde_eval(e, x[i]) * h - G.value_at_zero()) / ((m - 1) * h)
            assert e.loo_eval(i) == pytest.approx(ident, rel=1e-13)

    @pytest.mark.parametrize("kernel", [G, SilvermanKernel(), PinskerKernel(1.5)], ids=lambda k: k.name)
    def test_naive_loop(self, kernel, rng):
        x = rng.normal(size=20)
        e = fit_kde(x, 0.6, kernel)
        for i in range(20):
            assert e.loo_eval(i) == pytest.approx(naive_loo(x, 0.6, kernel.evaluate, i), rel=1e-9, abs=1e-13)

    def test_needs_two_points(self):
        with pytest.raises(ValueError):
            fit_kde([1.0], 1.0, G).loo_values()


class TestKernelSum:
    def test_combine_and_compress(self, rng):
        x = rng.normal(size=10)
        a, b = fit_kde(x, 0.2, G), fit_kde(x, 0.5, G)
        s = KernelSum.combine([a.kernel_sum(), b.kernel_sum(), a.kernel_sum()], [0.25, 0.5, 0.25])
        assert len(s.terms) == 2
        grid = np.linspace(-2, 2, 9)
        assert np.allclose(s.evaluate(grid), 0.5 * a.evaluate(grid) + 0.5 * b.evaluate(grid), rtol=1e-13)

    def test_fourier_transform_of_single_bump(self):
        s = fit_kde([0.7], 0.5, G).kernel_sum()
        t = np.array([0.0, 1.0, 3.0])
        assert np.allclose(s.ft(t), np.exp(-0.125 * t * t + 0.7j * t), atol=1e-15)


class TestBandwidthGrid:
    @pytest.mark.parametrize("n", [3, 10, 100, 1000, 12345])
    def test_matches_script(self, n):
        g = bandwidth_grid(n)
        ref = bandwidth_grid_script(n)
        assert g.M == len(ref)
        assert np.allclose(g.bandwidths, ref, rtol=1e-14)
        assert g.bandwidths[-1] == 1.0

    def test_n100_first(self):
        assert bandwidth_grid(100).h0 == pytest.approx(1 / (100 * math.log(100)), rel=1e-15)

    @given(st.integers(3, 10**6), st.floats(0.1, 5.0))
    def test_defining_property(self, n, a0):
        g = bandwidth_grid(n, 1, a0)
        hs = np.array(g.bandwidths)
        assert np.all(np.diff(hs) > 0)
        assert hs[-2] < 1 <= hs[-2] * (1 + g.a_n) * (1 + 1e-12)
        assert g.M <= 4 * max(math.log(n), 1) ** 2 / a0 + 3

    def test_two_dimensions(self):
        g = bandwidth_grid(100, 2)
        assert g.h0 == pytest.approx((100 * math.log(100)) ** -0.5)

    def test_too_small(self):
        with pytest.raises(ValueError):
            bandwidth_grid(2)


class TestSplits:
    def test_asymptotic_n100(self):
        assert split_sizes(100, "asymptotic") == (78, 22)

    def test_equal(self):
        assert split_sizes(100, "equal_halves") == (50, 50)
        assert split_sizes(101, "equal_halves") == (51, 50)

    def test_too_small(self):
        with pytest.raises(ValueError):
            split_sizes(2, "asymptotic")

    def test_validation_share_scan(self):
        ns = set(np.unique(np.geomspace(3, 10**6, 2000).astype(int))) | {3, 4, 5, 6, 7, 8, 9, 10, 10**6}
        for n in ns:
            m, l = split_sizes(int(n), "asymptotic")
            assert m + l == n
            assert l >= n / math.log(n)


class TestFourierMise:
    @pytest.mark.parametrize("h,n", [(0.1, 50), (0.3, 100), (1.0, 500), (0.02, 200)])
    def test_gaussian_against_full_line_quad(self, h, n):
        assert fourier_mise(G, h, n, standard_gaussian()) == pytest.approx(quad_mise_gauss(h, n), rel=1e-8)

    def test_closed_form_gaussian(self):
        # N(0,1) truth, Gaussian kernel: all integrals are Gaussian
        h, n = 0.4, 80
        bias = (1 / (2 * math.sqrt(math.pi))) * (1 - 2 / math.sqrt(1 + h * h / 2) + 1 / math.sqrt(1 + h * h))
        var = (1 / (2 * math.sqrt(math.pi))) * (1 / h - 1 / math.sqrt(1 + h * h)) / n
        assert fourier_mise(G, h, n, standard_gaussian()) == pytest.approx(bias + var, rel=1e-9)

    def test_small_h_lower_bound(self):
        L = standard_gaussian().sup_norm_bound()
        for h, n in [(0.001, 100), (0.01, 50), (0.05, 500)]:
            val = fourier_mise(G, h, n, standard_gaussian())
            assert val >= G.l2_norm_sq() / (n * h) - L / n

    def test_sinc_variance_term(self):
        h, n = 0.05, 100
        val = fourier_mise(SincKernel(), h, n, standard_gaussian())
        # bias is int_{|t|>1/h} |phi|^2 / 2 pi, negligible here
        var = (1 / math.pi) * (1 / h - math.sqrt(math.pi) * math.erf(1 / h) / 2) / n
        assert val == pytest.approx(var, rel=1e-8)

    def test_accepts_callable_cf(self):
        a = fourier_mise(G, 0.3, 100, lambda t: np.exp(-0.5 * t * t))
        b = fourier_mise(G, 0.3, 100, standard_gaussian())
        assert a == pytest.approx(b, rel=1e-9)

    def test_nonnegative_for_oscillating_truth(self):
        for name in ("dens1", "dens2", "claw", "exponential"):
            assert fourier_mise(G, 0.05, 100, get_density(name)) > 0

    def test_radial_d2(self):
        truth = GaussianMixture([1.0], [[0.0, 0.0]], [[1.0, 1.0]])
        h, n = 0.5, 100
        val = fourier_mise(GaussianKernel(2), h, n, truth)
        # separable closed form: ||K||^2 = 1/(4 pi) etc.
        c = 1 / (4 * math.pi)
        bias = c * (1 - 2 / (1 + h * h / 2) + 1 / (1 + h * h))
        var = c * (1 / (h * h) - 1 / (1 + h * h)) / n
        assert val == pytest.approx(bias + var, rel=1e-8)

    def test_unsupported_d2(self):
        with pytest.raises(UnsupportedCapabilityError):
            fourier_mise(PinskerKernel(2.0, 2), 0.5, 100, GaussianMixture([1.0], [[0, 0]], [[1, 1]]))

    def test_grid_argmin_interior(self):
        g = bandwidth_grid(50)
        vals = [fourier_mise(G, h, 50, standard_gaussian()) for h in g.bandwidths]
        j = int(np.argmin(vals))
        assert 0 < j < g.M - 1
        assert all(np.diff(vals[: j + 1]) < 0) and all(np.diff(vals[j:]) > 0)


class TestMinimax:
    def test_high_precision_constant(self):
        assert pinsker_constant(2.0, 1.0, 1) == pytest.approx(float(pinsker_constant_mp(2, 1, 1)), rel=1e-14)

    @pytest.mark.parametrize("beta,d", [(2.0, 1), (1.3, 2), (4.0, 3)])
    def test_scaling_identity(self, beta, d):
        r = pinsker_constant(beta, 4.0, d) / pinsker_constant(beta, 1.0, d)
        assert r == pytest.approx(4 ** (d / (2 * beta + d)), rel=1e-13)

    @pytest.mark.parametrize("beta,Q,d,n", [(2.0, 1.329, 1, 1000), (1.0, 0.3, 1, 10**4), (2.5, 2.0, 2, 500)])
    def test_bandwidth_equation(self, beta, Q, d, n):
        h = pinsker_optimal_bandwidth(beta, Q, d, n)
        assert bandwidth_equation_residual(beta, Q, d, n, h) <= 1e-8

    @pytest.mark.parametrize("beta,d", [(2.0, 1), (1.5, 2)])
    def test_variance_term_identity(self, beta, d):
        mq = minimax_quantities(beta, 1.7, d)
        n = 10**4
        h = mq.bandwidth(n)
        from agg_density.kernels import sphere_surface

        int_F = sphere_surface(d) * (1 / d - 1 / (beta + d))
        lhs = int_F / ((2 * math.pi) ** d * n * h**d)
        assert lhs == pytest.approx(mq.risk_bound(n), rel=1e-6)

    def test_domain(self):
        with pytest.raises(ValueError):
            pinsker_constant(0.5, 1.0, 1)
        with pytest.raises(ValueError):
            pinsker_constant(2.0, 0.0, 1)

    def test_gaussian_sobolev_functional(self):
        # int t^4 exp(-t^2) dt = Gamma(5/2)
        assert sobolev_functional(standard_gaussian(), 2.0) == pytest.approx(math.gamma(2.5), rel=1e-10)

    def test_gaussian_values(self):
        mq = minimax_quantities(2.0, math.gamma(2.5), 1)
        assert mq.C_star == pytest.approx(0.29261, abs=1e-5)
        assert mq.D_star == pytest.approx(0.72521, abs=1e-5)

    def test_pinsker_mise_below_bound(self):
        mq = minimax_quantities(2.0, math.gamma(2.5), 1)
        for n in (1000, 10**4):
            val = fourier_mise(PinskerKernel(2.0), mq.bandwidth(n), n, standard_gaussian())
            assert val <= mq.risk_bound(n)
