"""Integrated squared error, Monte-Carlo MISE, grid-oracle risk and bandwidth selectors."""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from ._errors import UnsupportedCapabilityError
from ._fourier import half_line_rule
from ._parallel import ordered_map
from ._quad import uniform_rule
from .aggregation import l2_norm_sq
from .densities import DensityModel, SamplePoints
from .kde import KernelSum, fit_kde
from .kernels import GaussianKernel, KernelSpec
from .rng import SeedProvenance, as_seed

ISE_METHODS = ("auto", "exact", "fourier", "quadrature")


@dataclass(frozen=True)
class QuadratureSpec:
    """Tensor-product rule over a finite window."""

    window: tuple
    nodes: int = 4096
    rule: str = "trapezoid"

    def __post_init__(self):
        win = tuple((float(lo), float(hi)) for lo, hi in self.window)
        if not win or any(not (math.isfinite(lo) and math.isfinite(hi) and hi > lo) for lo, hi in win):
            raise ValueError("quadrature window must be finite with hi > lo")
        if self.nodes < 64:
            raise ValueError("at least 64 nodes per dimension")
        if self.rule not in ("trapezoid", "gauss_legendre_composite"):
            raise ValueError(f"unknown rule {self.rule!r}")
        object.__setattr__(self, "window", win)

    @property
    def d(self) -> int:
        return len(self.window)

    @classmethod
    def for_model(cls, truth: DensityModel, nodes: int = 4096, rule: str = "trapezoid") -> "QuadratureSpec":
        return cls(tuple(truth.support_window()), nodes, rule)

    def points_weights(self):
        axes = [uniform_rule(lo, hi, self.nodes, self.rule) for lo, hi in self.window]
        if self.d == 1:
            return axes[0][0].reshape(-1, 1), axes[0][1]
        grids = np.meshgrid(*[a[0] for a in axes], indexing="ij")
        w = axes[0][1]
        for a in axes[1:]:
            w = np.multiply.outer(w, a[1])
        return np.stack([g.ravel() for g in grids], axis=1), w.ravel()

    def doubled(self) -> "QuadratureSpec":
        return QuadratureSpec(self.window, 2 * self.nodes, self.rule)

    def to_dict(self) -> dict:
        return {"window": [list(w) for w in self.window], "nodes": self.nodes, "rule": self.rule}


@dataclass
class MiseReport:
    estimator: str
    density: str
    n: int
    R: int
    mise: float
    stderr: float
    seed: int
    wall_time: float = 0.0
    ises: Optional[np.ndarray] = field(default=None, repr=False)

    def to_dict(self, keep_ises: bool = False) -> dict:
        out = {
            "estimator": self.estimator,
            "density": self.density,
            "n": self.n,
            "R": self.R,
            "mise": self.mise,
            "stderr": self.stderr,
            "seed": self.seed,
            "wall_time": self.wall_time,
        }
        if keep_ises and self.ises is not None:
            out["ises"] = [float(v) for v in self.ises]
        return out


# ---------------------------------------------------------------- ISE


def _ise_quadrature(estimate, truth: DensityModel, quad: QuadratureSpec) -> float:
    if quad.d != truth.d:
        raise ValueError(f"quadrature dimension {quad.d} != density dimension {truth.d}")
    x, w = quad.points_weights()
    xe = x[:, 0] if quad.d == 1 else x
    diff = np.asarray(estimate(xe), dtype=float) - truth.pdf(xe)
    return float(w @ (diff * diff))


def _ise_exact(s: KernelSum, truth: DensityModel) -> float:
    # ||s||^2 - 2 <s, p> + ||p||^2, all in closed form for Gaussian bumps
    ss = l2_norm_sq(s, "gaussian_closed_form")
    sp = sum(float(t.weights @ truth.gaussian_smooth(t.points if t.d > 1 else t.points[:, 0], t.h)) for t in s.terms)
    return max(ss - 2.0 * sp + truth.l2_norm_sq(), 0.0)


def _ise_fourier(s: KernelSum, truth: DensityModel) -> float:
    T = s.ft_cutoff(1e-12)
    lo, hi = truth.support_window()[0]
    pts = np.concatenate([t.points[:, 0] for t in s.terms])
    span = max(float(max(pts.max(), hi) - min(pts.min(), lo)), 1.0)
    h_max = max(t.h for t in s.terms)
    t, w = half_line_rule(T, span, s.ft_breakpoints(T), h_max=h_max)
    sh = s.ft(t)
    phi = truth.char_fn(t)
    head = float(w @ (np.abs(sh - phi) ** 2))
    tail = math.pi * truth.l2_norm_sq() - float(w @ (np.abs(phi) ** 2))
    return max((head + max(tail, 0.0)) / math.pi, 0.0)


def _kernel_sum_of(estimate) -> Optional[KernelSum]:
    if isinstance(estimate, KernelSum):
        return estimate
    if hasattr(estimate, "kernel_sum"):
        return estimate.kernel_sum()
    return None


def ise_method(estimate, truth: DensityModel) -> str:
    s = _kernel_sum_of(estimate)
    if s is not None and s.all_gaussian and truth.has_gaussian_smooth:
        return "exact"
    if s is not None and s.d == 1 and truth.has_char_fn:
        return "fourier"
    return "quadrature"


def ise(estimate, truth: DensityModel, quad: Optional[QuadratureSpec] = None, method: str = "auto") -> float:
    """Integrated squared error of ``estimate`` against ``truth``.

    ``exact`` (Gaussian bumps against a model with a closed-form Gaussian
    convolution) and ``fourier`` (d = 1, Plancherel) need an estimate exposing
    ``kernel_sum()``; ``quadrature`` works for any callable over ``quad``.
    """
    if method not in ISE_METHODS:
        raise ValueError(f"unknown ISE method {method!r}")
    if method == "auto":
        method = ise_method(estimate, truth)
    if method == "quadrature":
        return max(_ise_quadrature(estimate, truth, quad or QuadratureSpec.for_model(truth)), 0.0)
    s = _kernel_sum_of(estimate)
    if s is None:
        raise UnsupportedCapabilityError(f"{method} ISE needs a kernel-sum estimate")
    if method == "exact":
        if not (s.all_gaussian and truth.has_gaussian_smooth):
            raise UnsupportedCapabilityError("exact ISE needs Gaussian bumps and a Gaussian-smoothable truth")
        return _ise_exact(s, truth)
    if s.d != 1 or not truth.has_char_fn:
        raise UnsupportedCapabilityError("Fourier ISE needs d=1 and a characteristic function")
    return _ise_fourier(s, truth)


# ---------------------------------------------------------------- Monte-Carlo MISE


def sample_seed(seed, n: int, rep: int) -> SeedProvenance:
    """Stream of the ``rep``-th sample of size ``n``; shared by every estimator (common random numbers)."""
    return as_seed(seed).child("sample", n, rep)


def summarize(ises, estimator: str, density: str, n: int, seed, wall: float, keep: bool) -> MiseReport:
    arr = np.asarray(ises, dtype=float)
    R = arr.size
    mean = float(np.sum(arr) / R)
    se = float(np.std(arr, ddof=1) / math.sqrt(R)) if R > 1 else float("nan")
    return MiseReport(estimator, density, n, R, mean, se, as_seed(seed).master, wall, arr if keep else None)


def mise_mc(
    builder: Callable[[SamplePoints], object],
    truth: DensityModel,
    n: int,
    R: int,
    quad: Optional[QuadratureSpec] = None,
    seed=0,
    label: str = "estimator",
    method: str = "auto",
    threads=None,
    keep: bool = True,
) -> MiseReport:
    """Mean ISE of ``builder(sample)`` over R independent samples of size n."""
    if R < 2:
        raise ValueError("need R >= 2 replications")
    t0 = time.perf_counter()

    def one(rep):
        sample = truth.sample(n, sample_seed(seed, n, rep))
        return ise(builder(sample), truth, quad, method)

    ises = ordered_map(one, range(R), threads)
    return summarize(ises, label, truth.label, n, seed, time.perf_counter() - t0, keep)


@dataclass
class OracleResult:
    best_h: float
    report: MiseReport
    curve: list

    def __iter__(self):
        # unpacks as (best h, report)
        return iter((self.best_h, self.report))


def oracle_risk(
    grid: Sequence[float],
    kernel: KernelSpec,
    truth: DensityModel,
    n: int,
    R: int,
    quad: Optional[QuadratureSpec] = None,
    seed=0,
    method: str = "auto",
    threads=None,
) -> OracleResult:
    """Per-h MISE on shared samples; the oracle is the grid minimizer (ties to smaller h)."""
    hs = sorted(float(h) for h in grid)
    if not hs:
        raise ValueError("empty bandwidth grid")
    if R < 2:
        raise ValueError("need R >= 2 replications")
    t0 = time.perf_counter()

    def one(rep):
        sample = truth.sample(n, sample_seed(seed, n, rep))
        return [ise(fit_kde(sample, h, kernel), truth, quad, method) for h in hs]

    table = np.array(ordered_map(one, range(R), threads))
    wall = time.perf_counter() - t0
    curve = [summarize(table[:, j], f"kde:{h:g}", truth.label, n, seed, wall, True) for j, h in enumerate(hs)]
    j = int(np.argmin([c.mise for c in curve]))
    best = summarize(table[:, j], "oracle", truth.label, n, seed, wall, True)
    return OracleResult(hs[j], best, curve)


# ---------------------------------------------------------------- selectors


def _points_1d(points) -> np.ndarray:
    if isinstance(points, SamplePoints):
        points = points.points
    x = np.asarray(points, dtype=float)
    if x.ndim == 2:
        if x.shape[1] != 1:
            raise UnsupportedCapabilityError("rule-of-thumb bandwidths are one-dimensional")
        x = x[:, 0]
    return x


def _rule_of_thumb(points, factor: float) -> float:
    x = _points_1d(points)
    m = x.size
    if m < 2:
        raise ValueError("need at least two points")
    sd = float(np.std(x, ddof=1))
    q75, q25 = np.percentile(x, [75, 25])  # linear interpolation (type 7)
    iqr = float(q75 - q25)
    spread = min(sd, iqr / 1.34) if iqr > 0 else sd
    if spread > 0:
        return factor * spread * m ** -0.2
    # zero spread: documented fallback, scaled so that nrd / nrd0 stays 1.06 / 0.9
    return (factor / 0.9) * m ** -0.2 * max(abs(float(x[0])), 1.0) * 1e-3


def nrd0(points) -> float:
    """0.9 min(sd, IQR/1.34) m^{-1/5}."""
    return _rule_of_thumb(points, 0.9)


def nrd(points) -> float:
    """1.06 min(sd, IQR/1.34) m^{-1/5}."""
    return _rule_of_thumb(points, 1.06)


def ucv_criterion(points, h: float, kernel: Optional[KernelSpec] = None, backend: str = "auto") -> float:
    """||p_h||^2 - (2/m) sum_i p_{h,-i}(X_i)."""
    pts = points.points if isinstance(points, SamplePoints) else points
    e = fit_kde(pts, h, kernel or GaussianKernel(1))
    if e.m < 2:
        raise ValueError("UCV needs m >= 2")
    return l2_norm_sq(e, backend) - 2.0 * float(np.mean(e.loo_values()))


def ucv_candidates(points, count: int = 64) -> np.ndarray:
    """Log-spaced candidates on [0.1 hmax, hmax] with hmax = 1.144 sd m^{-1/5}."""
    x = _points_1d(points)
    sd = float(np.std(x, ddof=1))
    if not sd > 0:
        sd = max(abs(float(x[0])), 1.0) * 1e-3
    hmax = 1.144 * sd * x.size ** -0.2
    return np.geomspace(0.1 * hmax, hmax, count)


def ucv_select(points, kernel: Optional[KernelSpec] = None, candidates=None, backend: str = "auto") -> float:
    cands = np.unique(np.asarray(ucv_candidates(points) if candidates is None else candidates, dtype=float))
    if cands.size == 0 or np.any(cands <= 0):
        raise ValueError("candidates must be positive")
    scores = np.array([ucv_criterion(points, h, kernel, backend) for h in cands])
    return float(cands[int(np.argmin(scores))])
