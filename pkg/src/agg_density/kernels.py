"""Kernel catalog with spatial and Fourier-domain evaluation.

Fourier transforms use the convention F[f](t) = int exp(i x^T t) f(x) dx, so
that for every catalog kernel F[K](0) = 1 and

    ||K||^2 = (2 pi)^{-d} int F[K](t)^2 dt.

Kernels that are only defined through their transform (Pinsker) are evaluated
spatially from a precomputed interpolation table.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Union

import numpy as np
from scipy import interpolate, special

from ._errors import UnsupportedCapabilityError
from ._quad import graded_edges, panel_rule


def sphere_surface(d: int) -> float:
    """Surface area S_d = 2 pi^{d/2} / Gamma(d/2) of the unit sphere in R^d."""
    return 2.0 * math.pi ** (d / 2) / math.gamma(d / 2)


def _norms(t, d):
    arr = np.asarray(t, dtype=float)
    if d == 1:
        return np.abs(arr)
    if arr.ndim == 1:
        if arr.shape[0] != d:
            raise ValueError(f"expected a point in R^{d}")
        return np.linalg.norm(arr)
    return np.linalg.norm(arr, axis=-1)


class KernelSpec:
    """Base class for catalog kernels (immutable)."""

    d: int = 1
    #: True when F[K] vanishes outside the unit ball
    compact_ft: bool = False
    spatially_evaluable: bool = True

    @property
    def name(self) -> str:
        raise NotImplementedError

    def ft_radial(self, r):
        """F[K] as a function of ||t||."""
        raise NotImplementedError

    def ft(self, t):
        return np.clip(self.ft_radial(_norms(t, self.d)), 0.0, 1.0)

    def evaluate(self, x):
        raise NotImplementedError

    def __call__(self, x):
        return self.evaluate(x)

    def _eval_sq(self, r2):
        """K as a function of ||x||^2; the KDE hot path."""
        return self.evaluate(np.sqrt(r2) if self.d == 1 else np.c_[np.sqrt(r2), np.zeros((len(r2), self.d - 1))])

    def value_at_zero(self) -> float:
        return float(self._eval_sq(np.zeros(1))[0])

    def l2_norm_sq(self) -> float:
        raise NotImplementedError

    def ft_cutoff(self, tol: float = 1e-12) -> float:
        """Radius beyond which F[K] <= tol."""
        raise NotImplementedError

    def __str__(self):
        return self.name


@dataclass(frozen=True)
class GaussianKernel(KernelSpec):
    d: int = 1

    @property
    def name(self):
        return "gaussian"

    def ft_radial(self, r):
        r = np.asarray(r, dtype=float)
        return np.exp(-0.5 * r * r)

    def evaluate(self, x):
        r2 = np.asarray(x, dtype=float) ** 2
        if self.d > 1:
            r2 = r2.sum(axis=-1)
        return self._eval_sq(r2)

    def _eval_sq(self, r2):
        return np.exp(-0.5 * r2) / (2 * math.pi) ** (self.d / 2)

    def l2_norm_sq(self):
        return (2 * math.sqrt(math.pi)) ** (-self.d)

    def ft_cutoff(self, tol=1e-12):
        return math.sqrt(2 * math.log(1 / tol))


@dataclass(frozen=True)
class SilvermanKernel(KernelSpec):
    """K(x) = exp(-|x|/sqrt2) sin(|x|/sqrt2 + pi/4) / 2, with F[K](t) = 1 / (1 + t^4)."""

    d: int = 1

    def __post_init__(self):
        if self.d != 1:
            raise UnsupportedCapabilityError("Silverman kernel is one-dimensional")

    @property
    def name(self):
        return "silverman"

    def ft_radial(self, r):
        r = np.asarray(r, dtype=float)
        return 1.0 / (1.0 + r**4)

    def evaluate(self, x):
        a = np.abs(np.asarray(x, dtype=float)) / math.sqrt(2)
        return 0.5 * np.exp(-a) * np.sin(a + math.pi / 4)

    def _eval_sq(self, r2):
        return self.evaluate(np.sqrt(r2))

    def l2_norm_sq(self):
        # (1/pi) int_0^inf (1+t^4)^{-2} dt = 3 / (8 sqrt2)
        return 3.0 / (8.0 * math.sqrt(2.0))

    def ft_cutoff(self, tol=1e-12):
        return (1.0 / tol - 1.0) ** 0.25


@dataclass(frozen=True)
class SincKernel(KernelSpec):
    """K(x) = sin(x) / (pi x); F[K] is the indicator of the unit ball. Not integrable."""

    d: int = 1
    compact_ft = True

    @property
    def name(self):
        return "sinc"

    @property
    def spatially_evaluable(self):
        return self.d == 1

    def ft_radial(self, r):
        return (np.asarray(r, dtype=float) <= 1.0).astype(float)

    def evaluate(self, x):
        if self.d != 1:
            raise UnsupportedCapabilityError("sinc spatial evaluation only for d=1")
        return np.sinc(np.asarray(x, dtype=float) / math.pi) / math.pi

    def _eval_sq(self, r2):
        return self.evaluate(np.sqrt(r2))

    def l2_norm_sq(self):
        return sphere_surface(self.d) / (self.d * (2 * math.pi) ** self.d)

    def ft_cutoff(self, tol=1e-12):
        return 1.0


# Pinsker spatial table: Chebyshev-spaced abscissae on [0, X_MAX], cubic interpolation
PINSKER_TABLE_SIZE = 4096
PINSKER_X_MAX = 500.0


def pinsker_spatial_quadrature(beta: float, x):
    """(1/pi) int_0^1 (1 - t^beta) cos(t x) dt by graded composite Gauss-Legendre."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    width = min(0.05, 6.0 / max(1.0, float(np.max(np.abs(x)))))
    nodes, weights = panel_rule(graded_edges(0.0, 1.0, width, levels=40), 16)
    g = weights * (1.0 - nodes**beta)
    out = np.empty_like(x)
    step = max(1, 4_000_000 // nodes.size)
    for i in range(0, x.size, step):
        out[i : i + step] = np.cos(np.outer(x[i : i + step], nodes)) @ g
    return out / math.pi


@lru_cache(maxsize=64)
def _pinsker_table(beta: float):
    k = np.arange(PINSKER_TABLE_SIZE)
    xs = 0.5 * PINSKER_X_MAX * (1.0 - np.cos(np.pi * k / (PINSKER_TABLE_SIZE - 1)))
    vals = pinsker_spatial_quadrature(beta, xs)
    return interpolate.CubicSpline(xs, vals, bc_type=((1, 0.0), "not-a-knot"))


def _pinsker_tail(beta, x):
    # two-term asymptotic of (1/pi) int_0^1 (1 - t^beta) cos(tx) dt
    return (special.gamma(beta + 1) * math.sin(math.pi * beta / 2) * x ** (-beta - 1) - beta * np.cos(x) / x**2) / math.pi


@dataclass(frozen=True)
class PinskerKernel(KernelSpec):
    """Kernel with Fourier transform (1 - ||t||^beta)_+."""

    beta: float = 2.0
    d: int = 1
    compact_ft = True

    def __post_init__(self):
        if not self.beta > 0:
            raise ValueError("Pinsker exponent must be positive")
        object.__setattr__(self, "beta", float(self.beta))
        if self.d == 1:
            _pinsker_table(self.beta)  # build eagerly

    @property
    def name(self):
        return f"pinsker:{self.beta:g}"

    @property
    def spatially_evaluable(self):
        return self.d == 1

    def ft_radial(self, r):
        r = np.asarray(r, dtype=float)
        return np.maximum(1.0 - r**self.beta, 0.0)

    def evaluate(self, x):
        if self.d != 1:
            raise UnsupportedCapabilityError("Pinsker spatial evaluation only for d=1")
        return self._eval_sq(np.asarray(x, dtype=float) ** 2)

    def _eval_sq(self, r2):
        if self.d != 1:
            raise UnsupportedCapabilityError("Pinsker spatial evaluation only for d=1")
        a = np.sqrt(np.asarray(r2, dtype=float))
        out = np.empty_like(a)
        near = a <= PINSKER_X_MAX
        out[near] = _pinsker_table(self.beta)(a[near])
        out[~near] = _pinsker_tail(self.beta, a[~near])
        return out

    def value_at_zero(self):
        if self.d != 1:
            raise UnsupportedCapabilityError("Pinsker spatial evaluation only for d=1")
        return self.beta / ((self.beta + 1) * math.pi)

    def l2_norm_sq(self):
        d, b = self.d, self.beta
        return sphere_surface(d) * pinsker_q(b, d) / (2 * math.pi) ** d

    def ft_cutoff(self, tol=1e-12):
        return 1.0


def pinsker_q(beta: float, d: int) -> float:
    """Q_d(beta) = 1/d - 2/(beta + d) + 1/(2 beta + d) = int_0^1 (1 - r^beta)^2 r^{d-1} dr."""
    return 1.0 / d - 2.0 / (beta + d) + 1.0 / (2 * beta + d)


def kernel_from_name(name: str, d: int = 1) -> KernelSpec:
    """Parse ``gaussian``, ``pinsker:<beta>``, ``silverman`` or ``sinc``."""
    key = name.strip().lower()
    if key == "gaussian":
        return GaussianKernel(d)
    if key == "silverman":
        return SilvermanKernel(d)
    if key == "sinc":
        return SincKernel(d)
    if key.startswith("pinsker:"):
        return PinskerKernel(float(key.split(":", 1)[1]), d)
    raise ValueError(f"unknown kernel {name!r}")


def kernel_ft(k: KernelSpec, t):
    return k.ft(t)


def kernel_eval(k: KernelSpec, x):
    if not k.spatially_evaluable:
        raise UnsupportedCapabilityError(f"{k.name}: no spatial evaluation in d={k.d}")
    return k.evaluate(x)


def kernel_l2_norm_sq(k: KernelSpec) -> float:
    return k.l2_norm_sq()


@dataclass(frozen=True)
class AdmissibilityReport:
    passed: bool
    range_ok: bool
    monotone_ok: bool
    worst_range_violation: float
    worst_monotone_violation: float

    def __bool__(self):
        return self.passed


def validate_kernel(
    k: Union[KernelSpec, Callable], r_max: float = 50.0, points: int = 10_000, tol: float = 1e-12
) -> AdmissibilityReport:
    """Check F[K] in [0, 1] and radially nonincreasing on a grid of ||t|| values.

    ``k`` may also be a bare callable giving F[K] as a function of ||t||.
    """
    r = np.linspace(0.0, r_max, points)
    vals = np.asarray(k.ft_radial(r) if isinstance(k, KernelSpec) else k(r), dtype=float)
    below = np.maximum(-vals, 0.0)
    above = np.maximum(vals - 1.0, 0.0)
    worst_range = float(max(below.max(), above.max()))
    worst_mono = float(np.maximum(np.diff(vals), 0.0).max())
    range_ok = worst_range <= tol
    mono_ok = worst_mono <= tol
    return AdmissibilityReport(range_ok and mono_ok, range_ok, mono_ok, worst_range, worst_mono)


@dataclass(frozen=True)
class PinskerFamily:
    """Pinsker kernels with exponents d/2, d/2 + N^{-1/2}, ..., spaced by N^{-1/2}."""

    count: int
    d: int
    betas: tuple

    def kernels(self) -> list[PinskerKernel]:
        return [PinskerKernel(b, self.d) for b in self.betas]


def pinsker_family(N: int, d: int = 1) -> PinskerFamily:
    if N < 2:
        raise ValueError("a Pinsker family needs N >= 2")
    step = N ** -0.5
    betas = tuple(d / 2 + j * step for j in range(N))
    return PinskerFamily(N, d, betas)
