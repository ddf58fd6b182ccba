import math

import numpy as np
import pytest

from agg_density._errors import UnsupportedCapabilityError
from agg_density.densities import Exponential, GaussianMixture, get_density, standard_gaussian
from agg_density.kde import FIXED_GRID, fit_kde
from agg_density.kernels import GaussianKernel, PinskerKernel
from agg_density.risk import (
    QuadratureSpec,
    ise,
    ise_method,
    mise_mc,
    nrd,
    nrd0,
    oracle_risk,
    sample_seed,
    ucv_candidates,
    ucv_criterion,
    ucv_select,
)
from oracles import gl_pieces, naive_loo

G1 = GaussianKernel()
SQPI2 = 1 / (2 * math.sqrt(math.pi))


class _Truth:
    """Callable returning the true density, with no kernel-sum structure."""

    def __init__(self, model):
        self.model = model

    def __call__(self, x):
        return self.model.pdf(x)


class TestIse:
    def test_truth_is_zero(self):
        g = standard_gaussian()
        assert ise(_Truth(g), g) <= 1e-12

    def test_zero_estimate(self):
        g = standard_gaussian()
        assert ise(lambda x: np.zeros_like(x), g) == pytest.approx(SQPI2, rel=1e-6)

    def test_shifted_gaussian_closed_form(self):
        g = standard_gaussian()
        shifted = GaussianMixture([1.0], [0.5], [1.0])
        # 2 (1 - exp(-mu^2 / 4)) / (2 sqrt pi)
        ref = 2 * SQPI2 * (1 - math.exp(-0.25 / 4))
        assert ise(_Truth(shifted), g) == pytest.approx(ref, rel=1e-8)

    def test_routes_agree_on_gaussian_kde(self, rng):
        g = standard_gaussian()
        e = fit_kde(rng.normal(size=50), 0.3, G1)
        ex = ise(e, g, method="exact")
        assert ise(e, g, method="fourier") == pytest.approx(ex, rel=1e-10)
        assert ise(e, g, method="quadrature") == pytest.approx(ex, rel=1e-6)

    def test_quadrature_oracle_for_pinsker(self, rng):
        g = standard_gaussian()
        e = fit_kde(rng.normal(size=30), 0.4, PinskerKernel(2.0))
        # heavy x^{-3} tails: wide window by composite Gauss-Legendre
        ref = gl_pieces(lambda x: (e.evaluate(x) - g.pdf(x)) ** 2, -400, 400, width=0.05)
        assert ise(e, g) == pytest.approx(ref, rel=1e-6)

    def test_exact_on_block_density(self, rng):
        d1 = get_density("dens1")
        e = fit_kde(d1.sample(40, 3), 0.05, G1)
        assert ise_method(e, d1) == "exact"
        ref = gl_pieces(lambda x: (e.evaluate(x) - d1.pdf(x)) ** 2, -9, 9, d1.breakpoints(), width=0.005)
        assert ise(e, d1) == pytest.approx(ref, rel=1e-8)

    def test_method_selection(self, rng):
        e = fit_kde(rng.normal(size=5), 0.3, PinskerKernel(1.0))
        assert ise_method(e, standard_gaussian()) == "fourier"
        assert ise_method(lambda x: x, standard_gaussian()) == "quadrature"

    def test_errors(self):
        with pytest.raises(ValueError):
            ise(lambda x: x, standard_gaussian(), method="simpson")
        with pytest.raises(UnsupportedCapabilityError):
            ise(lambda x: x, standard_gaussian(), method="exact")

    def test_doubling_gate(self, rng):
        # every route used by the shipped configurations is stable under node doubling
        for name in ("gaussian", "exponential", "dens1"):
            truth = get_density(name)
            e = fit_kde(truth.sample(100, 1), 0.1, G1)
            q = QuadratureSpec.for_model(truth)
            a = ise(e, truth, q)
            b = ise(e, truth, q.doubled())
            assert abs(a - b) <= 1e-6 * a

    def test_quadrature_spec_validation(self):
        with pytest.raises(ValueError):
            QuadratureSpec(((1.0, 0.0),))
        with pytest.raises(ValueError):
            QuadratureSpec(((0.0, 1.0),), nodes=10)


class TestMiseMc:
    def test_truth_builder_is_zero(self):
        g = standard_gaussian()
        rep = mise_mc(lambda s: _Truth(g), g, 20, 4, seed=1)
        assert rep.mise <= 1e-12

    def test_matches_fourier_mise_roughly(self):
        from agg_density.kde import fourier_mise

        g = standard_gaussian()
        rep = mise_mc(lambda s: fit_kde(s, 0.3, G1), g, 100, 300, seed=2)
        exact = fourier_mise(G1, 0.3, 100, g)
        assert abs(rep.mise - exact) <= 4 * rep.stderr

    def test_stderr_scaling(self):
        g = standard_gaussian()
        b = lambda s: fit_kde(s, 0.3, G1)
        r200 = mise_mc(b, g, 50, 200, seed=3)
        r800 = mise_mc(b, g, 50, 800, seed=4)
        assert 0.4 <= r800.stderr / r200.stderr <= 0.6

    def test_order_and_parallel_invariance(self):
        g = standard_gaussian()
        b = lambda s: fit_kde(s, 0.2, G1)
        a = mise_mc(b, g, 40, 16, seed=5, threads=1)
        c = mise_mc(b, g, 40, 16, seed=5, threads=2)
        assert np.array_equal(a.ises, c.ises)
        assert a.mise == c.mise
        rev = np.sum(a.ises[::-1]) / a.R
        assert abs(rev - a.mise) <= 1e-12 * a.mise

    def test_common_random_numbers(self):
        g = standard_gaussian()
        s1 = g.sample(10, sample_seed(9, 10, 3)).points
        s2 = g.sample(10, sample_seed(9, 10, 3)).points
        assert np.array_equal(s1, s2)
        assert not np.array_equal(s1, g.sample(10, sample_seed(9, 10, 4)).points)

    def test_needs_two_reps(self):
        with pytest.raises(ValueError):
            mise_mc(lambda s: s, standard_gaussian(), 10, 1)

    def test_report_dict(self):
        rep = mise_mc(lambda s: fit_kde(s, 0.5, G1), standard_gaussian(), 10, 3, seed=6, label="kde")
        d = rep.to_dict()
        assert d["estimator"] == "kde" and d["R"] == 3 and d["seed"] == 6


class TestOracle:
    def test_single_h_equals_mise_mc(self):
        g = standard_gaussian()
        h, rep = oracle_risk([0.3], G1, g, 50, 10, seed=7)
        ref = mise_mc(lambda s: fit_kde(s, 0.3, G1), g, 50, 10, seed=7)
        assert h == 0.3
        assert rep.mise == pytest.approx(ref.mise, rel=1e-14)

    def test_curve_and_argmin(self):
        g = standard_gaussian()
        res = oracle_risk(FIXED_GRID, G1, g, 100, 20, seed=8)
        m = [c.mise for c in res.curve]
        j = int(np.argmin(m))
        assert res.best_h == FIXED_GRID[j]
        assert 0 < j  # tiny bandwidths are variance-dominated
        assert res.report.mise == m[j]

    def test_unimodal_fine_grid(self):
        g = standard_gaussian()
        hs = np.geomspace(0.05, 2.0, 12)
        m = np.array([c.mise for c in oracle_risk(hs, G1, g, 100, 40, seed=9).curve])
        j = int(np.argmin(m))
        assert 0 < j < len(hs) - 1
        assert np.all(np.diff(m[: j + 1]) < 0) and np.all(np.diff(m[j:]) > 0)

    def test_empty_grid(self):
        with pytest.raises(ValueError):
            oracle_risk([], G1, standard_gaussian(), 10, 5)


class TestRuleOfThumb:
    X10 = np.array([-1.2, -0.7, -0.3, 0.0, 0.1, 0.4, 0.8, 1.1, 1.5, 2.9])

    def test_ratio(self, rng):
        x = rng.normal(size=37)
        assert nrd(x) / nrd0(x) == pytest.approx(1.06 / 0.9, rel=1e-14)

    def test_hand_computed(self):
        x = self.X10
        sd = math.sqrt(sum((v - x.mean()) ** 2 for v in x) / 9)
        # type-7 quartiles: positions 0.25*9 = 2.25 and 0.75*9 = 6.75
        q1 = x[2] + 0.25 * (x[3] - x[2])
        q3 = x[6] + 0.75 * (x[7] - x[6])
        ref = 0.9 * min(sd, (q3 - q1) / 1.34) * 10 ** -0.2
        assert nrd0(x) == pytest.approx(ref, rel=1e-14)

    def test_zero_iqr_falls_back_to_sd(self):
        x = np.r_[np.zeros(8), 5.0, -5.0]
        sd = float(np.std(x, ddof=1))
        assert nrd0(x) == pytest.approx(0.9 * sd * 10 ** -0.2, rel=1e-14)

    def test_zero_spread(self):
        x = np.full(6, 3.0)
        assert nrd0(x) == pytest.approx(6 ** -0.2 * 3.0 * 1e-3, rel=1e-14)
        assert nrd0(np.zeros(5)) == pytest.approx(5 ** -0.2 * 1e-3, rel=1e-14)

    def test_too_few(self):
        with pytest.raises(ValueError):
            nrd0([1.0])


class TestUcv:
    def test_criterion_against_double_loop(self, rng):
        x = rng.normal(size=25)
        h = 0.35
        s2 = 2 * h * h
        norm = sum(math.exp(-0.5 * (a - b) ** 2 / s2) / math.sqrt(2 * math.pi * s2) for a in x for b in x) / 625
        loo = np.mean([naive_loo(x, h, G1.evaluate, i) for i in range(25)])
        assert ucv_criterion(x, h) == pytest.approx(norm - 2 * loo, rel=1e-12)

    def test_identical_pair(self):
        x = np.array([1.0, 1.0])
        c = ucv_candidates(x)
        vals = [ucv_criterion(x, h) for h in c]
        assert all(math.isfinite(v) for v in vals)
        # m=2, coincident: ||p_h||^2 = 1/(2 sqrt(pi) h) and the LOO term is 2 phi(0)/h
        h = c[0]
        assert vals[0] == pytest.approx(SQPI2 / h - 2 / (math.sqrt(2 * math.pi) * h), rel=1e-12)
        assert ucv_select(x) == pytest.approx(c[0], rel=1e-14)

    def test_duplicate_candidates(self, rng):
        x = rng.normal(size=40)
        c = np.geomspace(0.05, 1.0, 20)
        assert ucv_select(x, candidates=c) == ucv_select(x, candidates=np.r_[c, c[::3]])

    def test_selection_is_argmin(self, rng):
        x = rng.normal(size=60)
        c = ucv_candidates(x)
        vals = [ucv_criterion(x, h) for h in c]
        assert ucv_select(x) == c[int(np.argmin(vals))]

    def test_bad_candidates(self):
        with pytest.raises(ValueError):
            ucv_select(np.arange(5.0), candidates=[0.0, 1.0])

    def test_reasonable_on_normal_data(self):
        x = standard_gaussian().sample(400, 10).points[:, 0]
        assert 0.15 < ucv_select(x) < 0.6

    def test_exponential_sample(self):
        x = Exponential(1.0).sample(200, 11).points
        assert ucv_select(x) > 0
