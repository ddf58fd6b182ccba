"""Kernel density estimators, bandwidth grids, and Fourier-domain risk formulas.

The estimator fitted on m points with bandwidth h is

    p_hat(x) = (m h^d)^{-1} sum_i K((X_i - x) / h).

Estimators and their weighted combinations share one representation,
:class:`KernelSum`, a finite sum of scaled kernel bumps. Exact L2 inner
products and integrated squared errors are computed from it.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np
from scipy import integrate

from ._errors import QuadratureError, UnsupportedCapabilityError
from ._fourier import ecf_sum
from .densities import DensityModel, GaussianMixture, SamplePoints, _as_points
from .kernels import GaussianKernel, KernelSpec, sphere_surface

_EVAL_CHUNK = 4_000_000

#: fixed bandwidth set used for the simulation tables
FIXED_GRID = (0.001, 0.005, 0.01, 0.05, 0.1, 0.5)


@dataclass(frozen=True, eq=False)
class KernelTerm:
    """Bumps w_i h^{-d} K((x - X_i) / h) sharing one kernel and bandwidth."""

    kernel: KernelSpec
    h: float
    points: np.ndarray
    weights: np.ndarray

    @property
    def d(self):
        return self.points.shape[1]


class KernelSum:
    """A finite linear combination of kernel bumps."""

    def __init__(self, terms: Sequence[KernelTerm]):
        self.terms = tuple(terms)
        if not self.terms:
            raise ValueError("empty kernel sum")
        dims = {t.d for t in self.terms}
        if len(dims) != 1:
            raise ValueError("mixed dimensions in kernel sum")
        self.d = dims.pop()

    def evaluate(self, x):
        pts, single = _as_points(x, self.d)
        out = np.zeros(pts.shape[0])
        for term in self.terms:
            out += _eval_term(term, pts)
        return out[0] if single else out

    __call__ = evaluate

    def scaled(self, c: float) -> "KernelSum":
        return KernelSum([KernelTerm(t.kernel, t.h, t.points, c * t.weights) for t in self.terms])

    @staticmethod
    def combine(sums: Sequence["KernelSum"], coefs: Sequence[float]) -> "KernelSum":
        terms = []
        for s, c in zip(sums, coefs):
            if c != 0.0:
                terms.extend(s.scaled(float(c)).terms)
        if not terms:
            # keep a valid (zero) object
            t0 = sums[0].terms[0]
            terms = [KernelTerm(t0.kernel, t0.h, t0.points[:1], np.zeros(1))]
        return KernelSum(terms).compress()

    def compress(self) -> "KernelSum":
        """Merge terms with equal (kernel, h) and coincident points."""
        groups: dict = {}
        for t in self.terms:
            groups.setdefault((t.kernel, t.h), []).append(t)
        merged = []
        for (kernel, h), ts in groups.items():
            pts = np.concatenate([t.points for t in ts])
            w = np.concatenate([t.weights for t in ts])
            uniq, inv = np.unique(pts, axis=0, return_inverse=True)
            wsum = np.zeros(uniq.shape[0])
            np.add.at(wsum, inv.reshape(-1), w)
            merged.append(KernelTerm(kernel, h, uniq, wsum))
        return KernelSum(merged)

    @property
    def all_gaussian(self) -> bool:
        return all(isinstance(t.kernel, GaussianKernel) for t in self.terms)

    def ft(self, t):
        """Fourier transform at real frequencies ``t`` (d = 1)."""
        if self.d != 1:
            raise UnsupportedCapabilityError("Fourier evaluation of kernel sums only for d=1")
        t = np.asarray(t, dtype=float)
        out = np.zeros(t.size, dtype=complex)
        for term in self.terms:
            out += term.kernel.ft(term.h * t) * ecf_sum(term.points, term.weights, t)
        return out

    def ft_cutoff(self, tol: float = 1e-12) -> float:
        return max(t.kernel.ft_cutoff(tol) / t.h for t in self.terms)

    def ft_breakpoints(self, T: float):
        return [1.0 / t.h for t in self.terms if t.kernel.compact_ft and 1.0 / t.h < T]

    def span(self) -> float:
        lo = min(t.points.min() for t in self.terms)
        hi = max(t.points.max() for t in self.terms)
        return float(hi - lo)


def _eval_term(term: KernelTerm, pts: np.ndarray) -> np.ndarray:
    k, h, X, w = term.kernel, term.h, term.points, term.weights
    if not k.spatially_evaluable:
        raise UnsupportedCapabilityError(f"{k.name} has no spatial evaluation in d={k.d}")
    out = np.empty(pts.shape[0])
    step = max(1, _EVAL_CHUNK // max(1, X.shape[0]))
    for i in range(0, pts.shape[0], step):
        chunk = pts[i : i + step]
        if X.shape[1] == 1:
            r2 = ((chunk[:, :1] - X[:, 0][None, :]) / h) ** 2
        else:
            r2 = (((chunk[:, None, :] - X[None, :, :]) / h) ** 2).sum(axis=2)
        # row sums use numpy's pairwise reduction
        out[i : i + step] = (k._eval_sq(r2) * w[None, :]).sum(axis=1)
    return out / h ** X.shape[1]


@dataclass(frozen=True, eq=False)
class KdeEstimator:
    points: np.ndarray
    h: float
    kernel: KernelSpec

    def __post_init__(self):
        pts = np.array(self.points, dtype=float)
        if pts.ndim == 1:
            pts = pts.reshape(-1, 1)
        if pts.shape[0] < 1:
            raise ValueError("empty training set")
        if not self.h > 0:
            raise ValueError("bandwidth must be positive")
        if pts.shape[1] != self.kernel.d:
            raise ValueError(f"kernel dimension {self.kernel.d} != data dimension {pts.shape[1]}")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "h", float(self.h))

    @property
    def m(self) -> int:
        return self.points.shape[0]

    @property
    def d(self) -> int:
        return self.points.shape[1]

    def kernel_sum(self) -> KernelSum:
        return KernelSum([KernelTerm(self.kernel, self.h, self.points, np.full(self.m, 1.0 / self.m))])

    def evaluate(self, x):
        pts, single = _as_points(x, self.d)
        out = _eval_term(KernelTerm(self.kernel, self.h, self.points, np.full(self.m, 1.0 / self.m)), pts)
        return out[0] if single else out

    __call__ = evaluate

    def loo_eval(self, i: int) -> float:
        return float(self.loo_values()[i])

    def loo_values(self) -> np.ndarray:
        """Leave-one-out values p_hat_{-i}(X_i) for every training point."""
        m, h, d = self.m, self.h, self.d
        if m < 2:
            raise ValueError("leave-one-out needs at least two points")
        full = self.evaluate(self.points)
        return (m * full * h**d - self.kernel.value_at_zero()) / ((m - 1) * h**d)

    def __repr__(self):
        return f"KdeEstimator(m={self.m}, h={self.h:g}, kernel={self.kernel.name})"


def fit_kde(points, h: float, kernel: KernelSpec) -> KdeEstimator:
    if isinstance(points, SamplePoints):
        points = points.points
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 1:
        pts = pts.reshape(-1, 1)
    if not kernel.spatially_evaluable:
        raise UnsupportedCapabilityError(f"{kernel.name} cannot be evaluated spatially in d={pts.shape[1]}")
    return KdeEstimator(pts, h, kernel)


def kde_eval(e: KdeEstimator, x) -> float:
    return float(e.evaluate(np.asarray(x, dtype=float).reshape(1, -1) if e.d > 1 else float(x)))


def kde_eval_batch(e: KdeEstimator, grid) -> np.ndarray:
    return e.evaluate(grid)


def kde_loo_eval(e: KdeEstimator, i: int) -> float:
    return e.loo_eval(i)


# ---------------------------------------------------------------- bandwidth grid and splits


@dataclass(frozen=True)
class BandwidthGrid:
    n: int
    d: int
    a0: float
    h0: float
    a_n: float
    bandwidths: tuple

    @property
    def M(self) -> int:
        return len(self.bandwidths)

    def __iter__(self):
        return iter(self.bandwidths)

    def __len__(self):
        return self.M


def bandwidth_grid(n: int, d: int = 1, a0: float = 1.0) -> BandwidthGrid:
    """Weakly geometric grid h_0 < h_1 < ... < h_{M-2} < h_{M-1} = 1 (natural log)."""
    if n < 3:
        raise ValueError("the bandwidth grid needs n >= 3")
    if not a0 > 0:
        raise ValueError("a0 must be positive")
    logn = math.log(n)
    h0 = (n * logn) ** (-1.0 / d)
    a_n = a0 / logn
    hs = [h0]
    while h0 * (1 + a_n) ** len(hs) < 1.0:
        hs.append(h0 * (1 + a_n) ** len(hs))
    hs.append(1.0)
    return BandwidthGrid(n, d, a0, h0, a_n, tuple(hs))


def split_sizes(n: int, scheme: Union[str, float] = "equal_halves") -> tuple[int, int]:
    """Training and validation sizes (m, l) with m + l = n.

    ``asymptotic`` uses m = floor(n (1 - 1/log n)); ``equal_halves`` gives the
    extra point of an odd n to training; a float in (0, 1) is a training fraction.
    """
    if n < 3:
        raise ValueError("splitting needs n >= 3")
    if scheme == "asymptotic":
        m = math.floor(n * (1.0 - 1.0 / math.log(n)))
    elif scheme in ("equal_halves", "equal"):
        m = (n + 1) // 2
    elif isinstance(scheme, (float, int)) and 0 < scheme < 1:
        m = min(n - 1, max(1, int(round(scheme * n))))
    else:
        raise ValueError(f"unknown split scheme {scheme!r}")
    return m, n - m


# ---------------------------------------------------------------- Fourier MISE


def _quad(f, a, b, rtol, points=None):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        if np.isinf(b):
            val, err, info = integrate.quad(f, a, b, epsabs=0.0, epsrel=rtol, limit=2000, full_output=1)[:3]
            ier = 0 if abs(err) <= max(rtol * abs(val), 1e-15) else 1
        else:
            val, err, info, *rest = integrate.quad(
                f, a, b, epsabs=0.0, epsrel=rtol, limit=2000, points=points, full_output=1
            )
            ier = 0 if abs(err) <= max(rtol * abs(val), 1e-15) else 1
    if ier:
        raise QuadratureError("adaptive quadrature did not converge", err)
    return val


def _quad_chunked(f, a, b, rtol, width=40.0, scale=1.0):
    """quad over consecutive subintervals of [a, b]; robust for oscillatory integrands."""
    edges = np.linspace(a, b, max(1, int(math.ceil((b - a) / width))) + 1)
    total, err_total = 0.0, 0.0
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        for lo, hi in zip(edges[:-1], edges[1:]):
            val, err = integrate.quad(f, lo, hi, epsabs=1e-16 * scale, epsrel=rtol, limit=500)
            total += val
            err_total += err
    if err_total > max(rtol * abs(total), 1e-13 * scale):
        raise QuadratureError("adaptive quadrature did not converge", err_total)
    return total


def _half_line_l2(truth, phi2, rtol):
    if isinstance(truth, DensityModel):
        try:
            return math.pi * truth.l2_norm_sq()
        except UnsupportedCapabilityError:
            pass
    return _quad(phi2, 0.0, np.inf, rtol)


def _cf_sq(truth):
    if isinstance(truth, DensityModel):
        return lambda t: np.abs(truth.char_fn(np.asarray(t, dtype=float))) ** 2
    return lambda t: np.abs(truth(np.asarray(t, dtype=float))) ** 2


def fourier_mise(kernel: KernelSpec, h: float, n: int, truth, rtol: float = 1e-9) -> float:
    """Exact MISE of the n-sample kernel estimator from the characteristic function.

    ``truth`` is a :class:`DensityModel` or a characteristic function of t (d = 1).
    """
    if not h > 0 or n < 1:
        raise ValueError("need h > 0 and n >= 1")
    d = kernel.d
    if d == 1:
        phi2 = _cf_sq(truth)
        T = kernel.ft_cutoff(1e-12) / h
        # (1 - F)^2 |phi|^2 = |phi|^2 - (2F - F^2) |phi|^2, and int_0^inf |phi|^2 = pi ||p||^2
        norm = _half_line_l2(truth, phi2, rtol)

        def head(t):
            F = kernel.ft(h * t)
            p2 = phi2(t)
            return -(2 * F - F * F) * p2 + (1 - p2) * F * F / n

        val = norm + _quad_chunked(head, 0.0, T, rtol, scale=norm)
        return max(val, 0.0) / math.pi
    # d >= 2: radial reduction, Gaussian kernel and isotropic single Gaussian only
    if not (isinstance(kernel, GaussianKernel) and isinstance(truth, GaussianMixture)
            and truth.weights.size == 1 and np.ptp(truth.variances) == 0 and truth.d == d):
        raise UnsupportedCapabilityError("d >= 2 Fourier MISE only for a Gaussian kernel and an isotropic Gaussian")
    s2 = float(truth.variances[0, 0])

    def radial(r):
        F = np.exp(-0.5 * (h * r) ** 2)
        p2 = np.exp(-s2 * r * r)
        return r ** (d - 1) * ((1 - F) ** 2 * p2 + (1 - p2) * F**2 / n)

    return sphere_surface(d) * _quad(radial, 0.0, np.inf, rtol) / (2 * math.pi) ** d


# ---------------------------------------------------------------- Pinsker minimax quantities


@dataclass(frozen=True)
class MinimaxQuantities:
    beta: float
    Q: float
    d: int
    C_star: float
    D_star: float
    S_d: float

    def bandwidth(self, n: int) -> float:
        return self.D_star * n ** (-1.0 / (2 * self.beta + self.d))

    def risk_bound(self, n: int) -> float:
        return self.C_star * n ** (-2 * self.beta / (2 * self.beta + self.d))


def _check_minimax(beta, Q, d):
    if d < 1 or not beta > d / 2 or not Q > 0:
        raise ValueError("need d >= 1, beta > d/2 and Q > 0")


def pinsker_constant(beta: float, Q: float, d: int = 1) -> float:
    _check_minimax(beta, Q, d)
    S = sphere_surface(d)
    r = 2 * beta + d
    return (Q * r) ** (d / r) / (d * (2 * math.pi) ** d) * (beta * S / (beta + d)) ** (2 * beta / r)


def pinsker_bandwidth_constant(beta: float, Q: float, d: int = 1) -> float:
    _check_minimax(beta, Q, d)
    S = sphere_surface(d)
    return (beta * S / (Q * (beta + d) * (2 * beta + d))) ** (1.0 / (2 * beta + d))


def pinsker_optimal_bandwidth(beta: float, Q: float, d: int, n: int) -> float:
    return pinsker_bandwidth_constant(beta, Q, d) * n ** (-1.0 / (2 * beta + d))


def minimax_quantities(beta: float, Q: float, d: int = 1) -> MinimaxQuantities:
    return MinimaxQuantities(beta, Q, d, pinsker_constant(beta, Q, d), pinsker_bandwidth_constant(beta, Q, d),
                             sphere_surface(d))


def bandwidth_equation_residual(beta: float, Q: float, d: int, n: int, h: float) -> float:
    """Relative residual of int ||t||^beta F[K_beta](h t) dt = Q n h^beta, by quadrature."""
    S = sphere_surface(d)
    lhs = S * _quad(lambda r: r ** (beta + d - 1) * (1 - (h * r) ** beta), 0.0, 1.0 / h, 1e-13)
    rhs = Q * n * h**beta
    return abs(lhs - rhs) / rhs


def sobolev_functional(truth: DensityModel, beta: float) -> float:
    """int ||t||^{2 beta} |phi(t)|^2 dt for a one-dimensional model, by quadrature."""
    if truth.d != 1:
        raise UnsupportedCapabilityError("Sobolev functional by quadrature only for d=1")
    phi2 = _cf_sq(truth)
    return 2.0 * _quad(lambda t: np.abs(t) ** (2 * beta) * phi2(t), 0.0, np.inf, 1e-11)
