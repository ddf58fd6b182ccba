"""Linear and convex aggregation of density estimators with sample splitting.

For components p_1, ..., p_M and a validation sample X_1, ..., X_l the
aggregation objective is

    ||sum_j lam_j p_j||^2 - (2/l) sum_i sum_j lam_j p_j(X_i) = lam^T G lam - 2 b^T lam,

with G the Gram matrix of L2 inner products and b_j the validation mean of p_j.
Linear weights minimize it over R^M, convex weights over the simplex.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Union

import numpy as np

from ._errors import SolverError, UnsupportedCapabilityError
from ._fourier import ecf_sum, half_line_rule
from ._parallel import ordered_map
from ._quad import panel_edges, panel_rule
from .densities import SamplePoints
from .kde import KernelSum, KernelTerm, bandwidth_grid, fit_kde, split_sizes
from .kernels import GaussianKernel, KernelSpec, PinskerFamily
from .rng import as_seed
from .simplex_qp import QpProblem, solve_min_norm, solve_simplex_qp

BACKENDS = ("gaussian_closed_form", "fourier_quadrature", "spatial_quadrature")
_PAIR_CHUNK = 4_000_000
#: half-width of the spatial quadrature window, in units of the largest bandwidth
SPATIAL_TRUNCATION = 12.0


def _as_sum(e) -> KernelSum:
    if isinstance(e, KernelSum):
        return e
    if hasattr(e, "kernel_sum"):
        return e.kernel_sum()
    raise TypeError(f"cannot take inner products of {type(e).__name__}")


def select_backend(sums: Sequence[KernelSum]) -> str:
    if all(s.all_gaussian for s in sums):
        return "gaussian_closed_form"
    d = sums[0].d
    if d == 1:
        return "fourier_quadrature"
    if d <= 2:
        return "spatial_quadrature"
    raise UnsupportedCapabilityError("no inner-product backend for non-Gaussian kernels in d > 2")


# ---------------------------------------------------------------- Gaussian closed form


def _sq_dists(X, Y):
    if X.shape[1] == 1:
        return (X[:, :1] - Y[:, 0][None, :]) ** 2
    return ((X[:, None, :] - Y[None, :, :]) ** 2).sum(axis=2)


def _gauss_cross_term(t1: KernelTerm, t2: KernelTerm, cache=None) -> float:
    """sum_ij w1_i w2_j N(X_i - Y_j; 0, (h1^2 + h2^2) I)."""
    s2 = t1.h**2 + t2.h**2
    X, Y = t1.points, t2.points
    norm = (2 * math.pi * s2) ** (-t1.d / 2)
    if X.shape[0] * Y.shape[0] <= _PAIR_CHUNK:
        key = (id(X), id(Y))
        if cache is None or key not in cache:
            r2 = _sq_dists(X, Y)
            if cache is not None:
                cache[key] = r2
        else:
            r2 = cache[key]
        return norm * float(t1.weights @ (np.exp(-0.5 * r2 / s2) @ t2.weights))
    total = 0.0
    step = max(1, _PAIR_CHUNK // Y.shape[0])
    for i in range(0, X.shape[0], step):
        r2 = _sq_dists(X[i : i + step], Y)
        total += float(t1.weights[i : i + step] @ (np.exp(-0.5 * r2 / s2) @ t2.weights))
    return norm * total


def _gaussian_gram(sums: Sequence[KernelSum]) -> np.ndarray:
    for s in sums:
        if not s.all_gaussian:
            raise UnsupportedCapabilityError("gaussian_closed_form needs Gaussian-kernel components")
    M = len(sums)
    G = np.zeros((M, M))
    cache: dict = {}
    for j in range(M):
        for k in range(j, M):
            G[j, k] = G[k, j] = sum(_gauss_cross_term(a, b, cache) for a in sums[j].terms for b in sums[k].terms)
    return G


# ---------------------------------------------------------------- Fourier quadrature (d = 1)


def _fourier_rule(sums: Sequence[KernelSum]):
    T = max(s.ft_cutoff(1e-12) for s in sums)
    brk = sorted({b for s in sums for b in s.ft_breakpoints(T)})
    span = max(float(np.ptp(np.concatenate([t.points[:, 0] for s in sums for t in s.terms]))), 1.0)
    h_max = max(t.h for s in sums for t in s.terms)
    return half_line_rule(T, span, brk, h_max=h_max)


def _fourier_matrix(sums: Sequence[KernelSum], nodes, cache=None) -> np.ndarray:
    """Rows are the Fourier transforms of each sum on ``nodes``; shared CFs are computed once."""
    cache = {} if cache is None else cache
    S = np.zeros((len(sums), nodes.size), dtype=complex)
    for j, s in enumerate(sums):
        for term in s.terms:
            key = (id(term.points), term.weights.tobytes())
            if key not in cache:
                cache[key] = ecf_sum(term.points, term.weights, nodes)
            S[j] += term.kernel.ft(term.h * nodes) * cache[key]
    return S


def _fourier_gram(sums: Sequence[KernelSum]) -> np.ndarray:
    if any(s.d != 1 for s in sums):
        raise UnsupportedCapabilityError("fourier_quadrature only for d=1")
    nodes, weights = _fourier_rule(sums)
    M = len(sums)
    G = np.zeros((M, M))
    step = max(256, _PAIR_CHUNK // (8 * M))
    for i in range(0, nodes.size, step):
        S = _fourier_matrix(sums, nodes[i : i + step])
        G += ((S * weights[i : i + step][None, :]) @ S.conj().T).real
    G /= math.pi
    return 0.5 * (G + G.T)


# ---------------------------------------------------------------- spatial quadrature (d <= 2)


def spatial_rule(sums: Sequence[KernelSum], truncation: float = SPATIAL_TRUNCATION, window=None):
    """Tensor-product composite Gauss-Legendre rule covering all bumps."""
    d = sums[0].d
    if d > 2:
        raise UnsupportedCapabilityError("spatial_quadrature only for d <= 2")
    h_min = min(t.h for s in sums for t in s.terms)
    h_max = max(t.h for s in sums for t in s.terms)
    allpts = np.concatenate([t.points for s in sums for t in s.terms])
    axes = []
    for a in range(d):
        if window is not None:
            lo, hi = window[a]
        else:
            lo = allpts[:, a].min() - truncation * h_max
            hi = allpts[:, a].max() + truncation * h_max
        axes.append(panel_rule(panel_edges(lo, hi, 0.5 * h_min), 16))
    if d == 1:
        return axes[0][0].reshape(-1, 1), axes[0][1]
    (x, wx), (y, wy) = axes
    X, Y = np.meshgrid(x, y, indexing="ij")
    return np.c_[X.ravel(), Y.ravel()], np.outer(wx, wy).ravel()


def _spatial_gram(sums: Sequence[KernelSum], window=None) -> np.ndarray:
    nodes, weights = spatial_rule(sums, window=window)
    V = np.stack([s.evaluate(nodes) for s in sums])
    G = (V * weights[None, :]) @ V.T
    return 0.5 * (G + G.T)


def _gram(sums, backend):
    if backend == "auto":
        backend = select_backend(sums)
    if backend == "gaussian_closed_form":
        return _gaussian_gram(sums), backend
    if backend == "fourier_quadrature":
        return _fourier_gram(sums), backend
    if backend == "spatial_quadrature":
        return _spatial_gram(sums), backend
    raise ValueError(f"unknown backend {backend!r}")


def inner_product(e1, e2, backend: str = "auto") -> float:
    """L2 inner product of two estimators (KDEs or kernel sums)."""
    a, b = _as_sum(e1), _as_sum(e2)
    G, _ = _gram([a, b], backend)
    return float(G[0, 1])


def l2_norm_sq(e, backend: str = "auto") -> float:
    s = _as_sum(e)
    G, _ = _gram([s], backend)
    return float(G[0, 0])


# ---------------------------------------------------------------- Gram system and weights


@dataclass(frozen=True, eq=False)
class GramSystem:
    G: np.ndarray
    b: np.ndarray
    backend: str
    ell: int

    @property
    def M(self) -> int:
        return self.b.size

    def objective(self, lam) -> float:
        lam = np.asarray(lam, dtype=float)
        return float(lam @ self.G @ lam - 2.0 * self.b @ lam)

    def check(self) -> None:
        """Raise if G is not symmetric or not PSD up to tolerance."""
        scale = max(1.0, float(np.abs(self.G).max()))
        if np.abs(self.G - self.G.T).max() > 1e-10 * scale:
            raise ValueError("Gram matrix not symmetric")
        if np.linalg.eigvalsh(self.G).min() < -1e-8 * max(np.trace(self.G), 1e-300):
            raise ValueError("Gram matrix not positive semidefinite")


def gram_system(components: Sequence, validation, backend: str = "auto") -> GramSystem:
    pts = validation.points if isinstance(validation, SamplePoints) else np.asarray(validation, dtype=float)
    if pts.ndim == 1:
        pts = pts.reshape(-1, 1)
    if len(components) < 1:
        raise ValueError("need at least one component")
    if pts.shape[0] < 1:
        raise ValueError("empty validation sample")
    sums = [_as_sum(c) for c in components]
    G, used = _gram(sums, backend)
    b = np.array([np.mean(np.atleast_1d(c.evaluate(pts))) for c in components])
    G.setflags(write=False)
    b.setflags(write=False)
    return GramSystem(G, b, used, pts.shape[0])


@dataclass(frozen=True, eq=False)
class AggregateWeights:
    lam: np.ndarray
    constraint: str
    objective: float
    diagnostics: dict = field(default_factory=dict)


def linear_weights(sys: GramSystem, rank_tol: float = 1e-10) -> AggregateWeights:
    lam = solve_min_norm(sys.G, sys.b, rank_tol)
    rank = int(np.sum(np.abs(np.linalg.eigvalsh(sys.G)) > rank_tol * max(np.abs(sys.G).max(), 1e-300)))
    return AggregateWeights(lam, "linear", sys.objective(lam), {"rank": rank, "rank_tol": rank_tol})


def convex_weights(sys: GramSystem, kkt_tol: float = 1e-8, max_iter: int = 100_000) -> AggregateWeights:
    sol = solve_simplex_qp(QpProblem(sys.G, sys.b, kkt_tol, max_iter))
    diag = {"kkt_residual": sol.kkt_residual, "iterations": sol.iterations, "status": sol.status}
    if not sol.converged:
        raise SolverError(f"simplex QP did not converge: {diag}")
    return AggregateWeights(sol.lam, "simplex", sol.objective, diag)


def solve_weights(sys: GramSystem, mode: str) -> AggregateWeights:
    if mode == "linear":
        return linear_weights(sys)
    if mode == "convex":
        return convex_weights(sys)
    raise ValueError(f"unknown aggregation mode {mode!r}")


# ---------------------------------------------------------------- aggregates


@dataclass(frozen=True, eq=False)
class Aggregate:
    """sum_j lam_j p_j for one split."""

    components: tuple
    weights: AggregateWeights

    def kernel_sum(self) -> KernelSum:
        return KernelSum.combine([_as_sum(c) for c in self.components], self.weights.lam)

    def evaluate(self, x):
        vals = [np.asarray(c.evaluate(x), dtype=float) for c in self.components]
        return np.tensordot(self.weights.lam, np.stack(vals), axes=1)

    __call__ = evaluate


def aggregate(components: Sequence, validation, mode: str = "convex", backend: str = "auto") -> Aggregate:
    sys = gram_system(components, validation, backend)
    return Aggregate(tuple(components), solve_weights(sys, mode))


def make_splits(n: int, scheme: Union[str, float] = "equal_halves", count: int = 1, seed=0):
    """Independent random (train, validation) index partitions, each part sorted."""
    if count < 1:
        raise ValueError("count must be >= 1")
    m, _ = split_sizes(n, scheme)
    seed = as_seed(seed)
    out = []
    for s in range(count):
        perm = seed.child("split", s).generator().permutation(n)
        out.append((np.sort(perm[:m]), np.sort(perm[m:])))
    return out


@dataclass(frozen=True, eq=False)
class SplitRecord:
    split_id: int
    train_idx: np.ndarray
    val_idx: np.ndarray
    components: tuple
    weights: AggregateWeights

    @property
    def aggregate(self) -> Aggregate:
        return Aggregate(self.components, self.weights)


@dataclass(frozen=True, eq=False)
class AveragedAggregate:
    """Pointwise mean over splits of the per-split aggregates."""

    records: tuple
    mode: str = "convex"

    def __post_init__(self):
        if len(self.records) < 1:
            raise ValueError("an averaged aggregate needs at least one split")

    @property
    def count(self) -> int:
        return len(self.records)

    def evaluate(self, x):
        vals = np.stack([np.atleast_1d(r.aggregate.evaluate(x)) for r in self.records])
        out = vals.sum(axis=0) / self.count
        return out[0] if np.ndim(x) == 0 else out

    __call__ = evaluate

    def kernel_sum(self) -> KernelSum:
        sums, coefs = [], []
        for r in self.records:
            for c, lam in zip(r.components, r.weights.lam):
                sums.append(_as_sum(c))
                coefs.append(lam / self.count)
        return KernelSum.combine(sums, coefs)

    def to_dict(self) -> dict:
        return {
            "mode": self.mode,
            "splits": [
                {
                    "split_id": r.split_id,
                    "train_size": int(r.train_idx.size),
                    "validation_size": int(r.val_idx.size),
                    "weights": [float(v) for v in r.weights.lam],
                    "objective": r.weights.objective,
                    "diagnostics": {k: (v if not isinstance(v, np.generic) else v.item())
                                    for k, v in r.weights.diagnostics.items()},
                }
                for r in self.records
            ],
        }


EstimatorFactory = Callable[[np.ndarray], list]


def averaged_aggregate(
    sample,
    factory: EstimatorFactory,
    scheme: Union[str, float] = "equal_halves",
    count: int = 10,
    mode: str = "convex",
    backend: str = "auto",
    seed=None,
    threads=None,
) -> AveragedAggregate:
    """Fit components on each training part, weight them on its validation part, average.

    ``seed`` defaults to the ``splits`` child of the sample's own provenance.
    """
    if not isinstance(sample, SamplePoints):
        sample = SamplePoints(sample)
    if seed is None:
        if sample.seed is None:
            raise ValueError("a seed is required when the sample carries no provenance")
        seed = sample.seed.child("splits")
    splits = make_splits(sample.n, scheme, count, seed)

    def one(item):
        sid, (tr, va) = item
        comps = tuple(factory(sample.points[tr]))
        sys = gram_system(comps, sample.points[va], backend)
        return SplitRecord(sid, tr, va, comps, solve_weights(sys, mode))

    records = ordered_map(one, list(enumerate(splits)), threads)
    return AveragedAggregate(tuple(records), mode)


def kde_pool_factory(bandwidths: Sequence[float], kernel: Optional[KernelSpec] = None) -> EstimatorFactory:
    kernel = kernel or GaussianKernel(1)
    hs = tuple(float(h) for h in bandwidths)

    def factory(points):
        return [fit_kde(points, h, kernel) for h in hs]

    return factory


def multi_kernel_pool(family: PinskerFamily, grid) -> EstimatorFactory:
    """One KDE per (kernel, bandwidth), kernel-major and bandwidth-minor."""
    kernels = family.kernels()
    hs = tuple(grid)

    def factory(points):
        return [fit_kde(points, h, k) for k in kernels for h in hs]

    factory.size = len(kernels) * len(hs)
    return factory


def parametric_grid_aggregate(sample: SamplePoints, kernel: Optional[KernelSpec] = None, a0: float = 1.0,
                       count: int = 1, mode: str = "convex", seed=None) -> AveragedAggregate:
    """KDEs over the parametric bandwidth grid, asymptotic split scheme."""
    grid = bandwidth_grid(sample.n, sample.d, a0)
    return averaged_aggregate(sample, kde_pool_factory(grid.bandwidths, kernel or GaussianKernel(sample.d)),
                              "asymptotic", count, mode, "auto", seed)
