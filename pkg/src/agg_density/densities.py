"""Analytic ground-truth densities used to simulate data and score estimators.

Every built-in model can be evaluated, sampled and integrated exactly; most
also expose a closed-form characteristic function

    phi(t) = E exp(i t^T X)

and a closed-form convolution with an isotropic Gaussian, which is what makes
exact integrated squared errors of Gaussian-kernel estimators possible.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Callable, Optional

import numpy as np
from scipy import special

from ._errors import UnsupportedCapabilityError
from .rng import SeedProvenance, as_seed

_SQRT2PI = math.sqrt(2.0 * math.pi)


def _as_points(x, d: int):
    """Coerce ``x`` to shape (k, d); also return whether the input was a single point."""
    arr = np.asarray(x, dtype=float)
    if arr.ndim == 0:
        if d != 1:
            raise ValueError(f"scalar input for a {d}-dimensional model")
        return arr.reshape(1, 1), True
    if d == 1 and arr.ndim == 1:
        return arr.reshape(-1, 1), False
    if arr.ndim == 1:
        if arr.shape[0] != d:
            raise ValueError(f"expected a point in R^{d}, got shape {arr.shape}")
        return arr.reshape(1, d), True
    if arr.ndim != 2 or arr.shape[1] != d:
        raise ValueError(f"expected points of shape (k, {d}), got {arr.shape}")
    return arr, False


def _finish(values, single):
    return values[0] if single else values


@dataclass(frozen=True)
class SamplePoints:
    """An i.i.d. sample together with the seed path that produced it."""

    points: np.ndarray
    seed: Optional[SeedProvenance] = None

    def __post_init__(self):
        pts = np.array(self.points, dtype=float)
        if pts.ndim == 1:
            pts = pts.reshape(-1, 1)
        if pts.ndim != 2 or pts.shape[0] < 1:
            raise ValueError("a sample needs at least one point")
        if not np.all(np.isfinite(pts)):
            raise ValueError("sample coordinates must be finite")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def d(self) -> int:
        return self.points.shape[1]

    def subset(self, idx) -> "SamplePoints":
        return SamplePoints(self.points[np.asarray(idx)], None)

    def __len__(self):
        return self.n


class DensityModel:
    """Base class. Subclasses are immutable dataclasses."""

    d: int = 1
    label: str = "density"

    def pdf(self, x):
        raise NotImplementedError

    def __call__(self, x):
        return self.pdf(x)

    def _draw(self, n: int, rng: np.random.Generator) -> np.ndarray:
        raise NotImplementedError

    def sample(self, n: int, seed) -> SamplePoints:
        if n < 1:
            raise ValueError("n must be at least 1")
        prov = as_seed(seed)
        return SamplePoints(self._draw(int(n), prov.generator()), prov)

    def char_fn(self, t):
        raise UnsupportedCapabilityError(f"{self.label}: no characteristic function available")

    @property
    def has_char_fn(self) -> bool:
        return True

    def sup_norm_bound(self) -> float:
        raise NotImplementedError

    def support_window(self) -> list[tuple[float, float]]:
        raise NotImplementedError

    def breakpoints(self) -> tuple[float, ...]:
        """Points where the density (d=1) is not smooth."""
        return ()

    def cdf(self, x):
        raise UnsupportedCapabilityError(f"{self.label}: no closed-form CDF")

    def l2_norm_sq(self) -> float:
        """Squared L2 norm of the density."""
        raise UnsupportedCapabilityError(f"{self.label}: no closed-form L2 norm")

    def gaussian_smooth(self, x, h):
        """Convolution of the density with the N(0, h^2 I) density, evaluated at ``x``."""
        raise UnsupportedCapabilityError(f"{self.label}: no closed-form Gaussian convolution")

    @property
    def has_gaussian_smooth(self) -> bool:
        return False


@dataclass(frozen=True, eq=False)
class GaussianMixture(DensityModel):
    """Mixture of Gaussians with diagonal covariances."""

    weights: np.ndarray
    means: np.ndarray
    variances: np.ndarray
    label: str = "gaussian_mixture"

    def __post_init__(self):
        w = np.atleast_1d(np.asarray(self.weights, dtype=float))
        mu = np.asarray(self.means, dtype=float)
        var = np.asarray(self.variances, dtype=float)
        if mu.ndim == 1:
            mu = mu.reshape(-1, 1)
        if var.ndim == 1:
            var = var.reshape(-1, 1)
        if var.shape[1] == 1 and mu.shape[1] > 1:
            var = np.repeat(var, mu.shape[1], axis=1)
        if not (w.shape[0] == mu.shape[0] == var.shape[0]) or mu.shape != var.shape:
            raise ValueError("weights, means and variances disagree in shape")
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
            raise ValueError("mixture weights must be nonnegative and sum to 1")
        if np.any(var <= 0) or not np.all(np.isfinite(var)) or not np.all(np.isfinite(mu)):
            raise ValueError("variances must be positive and all parameters finite")
        for arr in (w, mu, var):
            arr.setflags(write=False)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "means", mu)
        object.__setattr__(self, "variances", var)

    @property
    def d(self) -> int:
        return self.means.shape[1]

    def pdf(self, x):
        pts, single = _as_points(x, self.d)
        out = np.zeros(pts.shape[0])
        for w, mu, var in zip(self.weights, self.means, self.variances):
            z2 = ((pts - mu) ** 2 / var).sum(axis=1)
            out += w * np.exp(-0.5 * z2) / np.sqrt(np.prod(2 * np.pi * var))
        return _finish(out, single)

    def _draw(self, n, rng):
        comp = rng.choice(len(self.weights), size=n, p=self.weights)
        z = rng.standard_normal((n, self.d))
        return self.means[comp] + z * np.sqrt(self.variances[comp])

    def char_fn(self, t):
        pts, single = _as_points(t, self.d)
        out = np.zeros(pts.shape[0], dtype=complex)
        for w, mu, var in zip(self.weights, self.means, self.variances):
            out += w * np.exp(1j * pts @ mu - 0.5 * (pts**2) @ var)
        return _finish(out, single)

    def sup_norm_bound(self):
        return float(sum(w / np.sqrt(np.prod(2 * np.pi * v)) for w, v in zip(self.weights, self.variances)))

    def support_window(self):
        sd = np.sqrt(self.variances.max(axis=0))
        return [(float(lo), float(hi)) for lo, hi in zip(self.means.min(axis=0) - 8 * sd, self.means.max(axis=0) + 8 * sd)]

    def cdf(self, x):
        if self.d != 1:
            raise UnsupportedCapabilityError("CDF only for d=1")
        xs = np.asarray(x, dtype=float)
        sd = np.sqrt(self.variances[:, 0])
        z = (xs[..., None] - self.means[:, 0]) / sd
        return (special.ndtr(z) * self.weights).sum(axis=-1)

    def l2_norm_sq(self):
        return float(self._cross(self.means, self.variances, self.weights))

    def _cross(self, mu2, var2, w2):
        total = 0.0
        for w, mu, var in zip(self.weights, self.means, self.variances):
            s = var + var2
            z2 = ((mu - mu2) ** 2 / s).sum(axis=1)
            total += w * np.sum(w2 * np.exp(-0.5 * z2) / np.sqrt(np.prod(2 * np.pi * s, axis=1)))
        return total

    def gaussian_smooth(self, x, h):
        pts, single = _as_points(x, self.d)
        out = np.zeros(pts.shape[0])
        for w, mu, var in zip(self.weights, self.means, self.variances):
            s = var + h * h
            z2 = ((pts - mu) ** 2 / s).sum(axis=1)
            out += w * np.exp(-0.5 * z2) / np.sqrt(np.prod(2 * np.pi * s))
        return _finish(out, single)

    @property
    def has_gaussian_smooth(self):
        return True


@dataclass(frozen=True)
class Exponential(DensityModel):
    rate: float = 1.0
    label: str = "exponential"

    def __post_init__(self):
        if not (self.rate > 0 and math.isfinite(self.rate)):
            raise ValueError("rate must be positive")

    def pdf(self, x):
        pts, single = _as_points(x, 1)
        x1 = pts[:, 0]
        out = np.where(x1 >= 0, self.rate * np.exp(-self.rate * np.maximum(x1, 0.0)), 0.0)
        return _finish(out, single)

    def _draw(self, n, rng):
        return rng.exponential(1.0 / self.rate, size=(n, 1))

    def char_fn(self, t):
        pts, single = _as_points(t, 1)
        return _finish(self.rate / (self.rate - 1j * pts[:, 0]), single)

    def sup_norm_bound(self):
        return float(self.rate)

    def support_window(self):
        return [(0.0, 40.0 / self.rate)]

    def breakpoints(self):
        return (0.0,)

    def cdf(self, x):
        xs = np.asarray(x, dtype=float)
        return np.where(xs > 0, -np.expm1(-self.rate * np.maximum(xs, 0.0)), 0.0)

    def l2_norm_sq(self):
        return 0.5 * self.rate

    def gaussian_smooth(self, x, h):
        # r exp(-r x + r^2 h^2 / 2) Phi((x - r h^2) / h), written with erfcx to avoid overflow
        pts, single = _as_points(x, 1)
        r = self.rate
        x1 = pts[:, 0]
        z = (x1 - r * h * h) / h
        out = np.empty_like(x1)
        pos = z >= 0
        out[pos] = r * np.exp(-r * x1[pos] + 0.5 * (r * h) ** 2) * special.ndtr(z[pos])
        zn = z[~pos]
        # Phi(z) = erfcx(-z/sqrt2) exp(-z^2/2) / 2 for z < 0
        out[~pos] = 0.5 * r * special.erfcx(-zn / math.sqrt(2)) * np.exp(
            -r * x1[~pos] + 0.5 * (r * h) ** 2 - 0.5 * zn * zn
        )
        return _finish(out, single)

    @property
    def has_gaussian_smooth(self):
        return True


@dataclass(frozen=True)
class BlockOscillatorMixture(DensityModel):
    """w * N(0,1) + (1 - w) * indicator of T intervals ((2i-2)/T, (2i-1)/T].

    The intervals have total length 1, so the second part is itself a density.
    """

    blocks: int
    gaussian_weight: float = 0.5
    label: str = "block_oscillator"

    def __post_init__(self):
        if int(self.blocks) != self.blocks or self.blocks < 1:
            raise ValueError("block count must be a positive integer")
        if not 0.0 <= self.gaussian_weight <= 1.0:
            raise ValueError("Gaussian weight must be a probability")
        object.__setattr__(self, "blocks", int(self.blocks))

    @property
    def edges(self):
        i = np.arange(1, self.blocks + 1)
        return 2.0 * (i - 1) / self.blocks, (2.0 * i - 1) / self.blocks

    def _in_blocks(self, x1):
        # (a_i, b_i] with a_i = 2(i-1)/T, b_i = (2i-1)/T
        T = self.blocks
        u = x1 * T
        k = np.ceil(u / 2.0)
        inside = (k >= 1) & (k <= T) & (u <= 2 * k - 1) & (u > 2 * k - 2)
        return inside

    def pdf(self, x):
        pts, single = _as_points(x, 1)
        x1 = pts[:, 0]
        w = self.gaussian_weight
        out = w * np.exp(-0.5 * x1 * x1) / _SQRT2PI + (1 - w) * self._in_blocks(x1)
        return _finish(out, single)

    def _draw(self, n, rng):
        gauss = rng.random(n) < self.gaussian_weight
        blk = rng.integers(0, self.blocks, size=n)
        a, _ = self.edges
        # uniform on (a, a + 1/T]
        u = a[blk] + (1.0 - rng.random(n)) / self.blocks
        z = rng.standard_normal(n)
        return np.where(gauss, z, u).reshape(n, 1)

    def char_fn(self, t):
        pts, single = _as_points(t, 1)
        t1 = pts[:, 0]
        a, b = self.edges
        length = 1.0 / self.blocks
        mid = 0.5 * (a + b)
        # int_a^b e^{itx} dx = L e^{it mid} sinc(t L / 2pi)
        blocks = length * np.sinc(t1 * length / (2 * np.pi))[:, None] * np.exp(1j * t1[:, None] * mid[None, :])
        w = self.gaussian_weight
        out = w * np.exp(-0.5 * t1 * t1) + (1 - w) * blocks.sum(axis=1)
        return _finish(out, single)

    def sup_norm_bound(self):
        w = self.gaussian_weight
        return float(w / _SQRT2PI + (1 - w))

    def support_window(self):
        return [(-8.0, 8.0)]

    def breakpoints(self):
        a, b = self.edges
        return tuple(np.concatenate([a, b]))

    def cdf(self, x):
        xs = np.asarray(x, dtype=float)
        a, b = self.edges
        covered = np.clip(xs[..., None] - a, 0.0, 1.0 / self.blocks).sum(axis=-1)
        w = self.gaussian_weight
        return w * special.ndtr(xs) + (1 - w) * covered

    def l2_norm_sq(self):
        w = self.gaussian_weight
        a, b = self.edges
        cross = np.sum(special.ndtr(b) - special.ndtr(a))
        return float(w * w / (2 * math.sqrt(math.pi)) + 2 * w * (1 - w) * cross + (1 - w) ** 2)

    def gaussian_smooth(self, x, h):
        pts, single = _as_points(x, 1)
        x1 = pts[:, 0]
        a, b = self.edges
        w = self.gaussian_weight
        s2 = 1.0 + h * h
        gauss = np.exp(-0.5 * x1 * x1 / s2) / math.sqrt(2 * math.pi * s2)
        # P(a < x - hZ <= b) summed over blocks
        hi = special.ndtr((b[None, :] - x1[:, None]) / h)
        lo = special.ndtr((a[None, :] - x1[:, None]) / h)
        out = w * gauss + (1 - w) * (hi - lo).sum(axis=1)
        return _finish(out, single)

    @property
    def has_gaussian_smooth(self):
        return True


@dataclass(frozen=True)
class CustomDensity(DensityModel):
    """User-supplied density: evaluator, sampler ``(n, rng) -> (n, d)`` and sup-norm bound."""

    evaluator: Callable
    sampler: Callable
    sup_bound: float
    window: tuple = ((-8.0, 8.0),)
    cf: Optional[Callable] = None
    dim: int = 1
    label: str = "custom"

    def __post_init__(self):
        if not self.sup_bound > 0:
            raise ValueError("sup-norm bound must be positive")

    @property
    def d(self):
        return self.dim

    def pdf(self, x):
        pts, single = _as_points(x, self.d)
        arg = pts[:, 0] if self.d == 1 else pts
        return _finish(np.asarray(self.evaluator(arg), dtype=float), single)

    def _draw(self, n, rng):
        return np.asarray(self.sampler(n, rng), dtype=float).reshape(n, self.d)

    def char_fn(self, t):
        if self.cf is None:
            raise UnsupportedCapabilityError(f"{self.label}: no characteristic function supplied")
        pts, single = _as_points(t, self.d)
        arg = pts[:, 0] if self.d == 1 else pts
        return _finish(np.asarray(self.cf(arg), dtype=complex), single)

    @property
    def has_char_fn(self):
        return self.cf is not None

    def sup_norm_bound(self):
        return float(self.sup_bound)

    def support_window(self):
        return [tuple(map(float, w)) for w in self.window]


# ---------------------------------------------------------------- module-level API


def eval_density(model: DensityModel, x):
    return model.pdf(x)


def sample(model: DensityModel, n: int, seed) -> SamplePoints:
    return model.sample(n, seed)


def char_fn(model: DensityModel, t):
    return model.char_fn(t)


def sup_norm_bound(model: DensityModel) -> float:
    return model.sup_norm_bound()


# ---------------------------------------------------------------- catalog and I/O


def standard_gaussian(d: int = 1) -> GaussianMixture:
    return GaussianMixture([1.0], np.zeros((1, d)), np.ones((1, d)), label="gaussian")


def model_from_dict(spec: dict) -> DensityModel:
    variant = spec["variant"]
    label = spec.get("label")
    kw = {"label": label} if label else {}
    if variant == "GaussianMixture":
        return GaussianMixture(spec["weights"], spec["means"], spec["variances"], **kw)
    if variant == "Exponential":
        return Exponential(float(spec.get("rate", 1.0)), **kw)
    if variant == "BlockOscillatorMixture":
        return BlockOscillatorMixture(int(spec["blocks"]), float(spec.get("gaussian_weight", 0.5)), **kw)
    raise ValueError(f"cannot build {variant!r} from JSON (Custom models need Python callables)")


def model_to_dict(model: DensityModel) -> dict:
    if isinstance(model, GaussianMixture):
        return {"variant": "GaussianMixture", "label": model.label, "weights": model.weights.tolist(),
                "means": model.means.tolist(), "variances": model.variances.tolist()}
    if isinstance(model, Exponential):
        return {"variant": "Exponential", "label": model.label, "rate": model.rate}
    if isinstance(model, BlockOscillatorMixture):
        return {"variant": "BlockOscillatorMixture", "label": model.label, "blocks": model.blocks,
                "gaussian_weight": model.gaussian_weight}
    raise ValueError(f"{type(model).__name__} is not serializable")


def load_model_json(path) -> DensityModel:
    return model_from_dict(json.loads(Path(path).read_text()))


def _marron_wand(name):
    raw = resources.files("agg_density").joinpath("data/marron_wand.json").read_text()
    return model_from_dict(json.loads(raw)[name])


_CATALOG = {
    "gaussian": standard_gaussian,
    "exponential": lambda: Exponential(1.0),
    "claw": lambda: _marron_wand("claw"),
    "smooth_comb": lambda: _marron_wand("smooth_comb"),
    "dens1": lambda: BlockOscillatorMixture(14, 0.5, label="dens1"),
    "dens2": lambda: BlockOscillatorMixture(10, 0.5, label="dens2"),
}

DENSITY_IDS = tuple(_CATALOG)


def get_density(name: str) -> DensityModel:
    """Look up a built-in model by id, or load a JSON fixture if ``name`` is a path."""
    if name in _CATALOG:
        return _CATALOG[name]()
    if name.endswith(".json") and Path(name).exists():
        return load_model_json(name)
    raise KeyError(f"unknown density {name!r}; known: {', '.join(DENSITY_IDS)}")


def read_sample_file(path) -> SamplePoints:
    pts = np.loadtxt(path, comments="#", ndmin=2)
    return SamplePoints(pts)


def write_sample_file(path, points, header: str = ""):
    pts = np.asarray(points.points if isinstance(points, SamplePoints) else points, dtype=float)
    if pts.ndim == 1:
        pts = pts.reshape(-1, 1)
    np.savetxt(path, pts, fmt="%.17g", header=header, comments="# ")
