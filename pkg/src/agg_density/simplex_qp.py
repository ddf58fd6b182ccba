"""Minimize lambda^T G lambda - 2 b^T lambda over {lambda >= 0, sum(lambda) <= 1}.

Also provides the unconstrained minimum-norm solve used by linear aggregation.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True, eq=False)
class QpProblem:
    G: np.ndarray
    b: np.ndarray
    kkt_tol: float = 1e-8
    max_iter: int = 100_000

    def __post_init__(self):
        G = np.array(self.G, dtype=float)
        b = np.array(self.b, dtype=float).reshape(-1)
        if G.ndim != 2 or G.shape != (b.size, b.size):
            raise ValueError("G must be M x M and b of length M")
        if not (np.all(np.isfinite(G)) and np.all(np.isfinite(b))):
            raise ValueError("G and b must be finite")
        scale = max(1.0, float(np.abs(G).max(initial=0.0)))
        if np.abs(G - G.T).max(initial=0.0) > 1e-10 * scale:
            raise ValueError("G is not symmetric")
        G = 0.5 * (G + G.T)
        G.setflags(write=False)
        b.setflags(write=False)
        object.__setattr__(self, "G", G)
        object.__setattr__(self, "b", b)

    @property
    def M(self) -> int:
        return self.b.size

    def objective(self, lam) -> float:
        lam = np.asarray(lam, dtype=float)
        return float(lam @ self.G @ lam - 2.0 * self.b @ lam)

    def gradient(self, lam):
        return 2.0 * (self.G @ lam - self.b)


@dataclass(frozen=True, eq=False)
class QpSolution:
    lam: np.ndarray
    objective: float
    kkt_residual: float
    iterations: int
    status: str
    history: tuple = field(default=(), repr=False)

    @property
    def converged(self) -> bool:
        return self.status == "converged"


def simplex_project(v) -> np.ndarray:
    """Euclidean projection onto {x >= 0, sum(x) <= 1}."""
    v = np.asarray(v, dtype=float)
    if not np.all(np.isfinite(v)):
        raise ValueError("cannot project non-finite vector")
    pos = np.maximum(v, 0.0)
    if pos.sum() <= 1.0:
        return pos
    # projection onto the probability simplex (sort-based)
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    idx = np.arange(1, v.size + 1)
    rho = np.nonzero(u - css / idx > 0)[0][-1]
    theta = css[rho] / (rho + 1.0)
    return np.maximum(v - theta, 0.0)


def _sigma_max(G, iters=50):
    if not np.any(G):
        return 0.0
    x = np.ones(G.shape[0]) / np.sqrt(G.shape[0]) + 1e-3 * np.arange(G.shape[0])
    s = 0.0
    for _ in range(iters):
        y = G @ x
        ny = np.linalg.norm(y)
        if ny == 0.0:
            return 0.0
        x = y / ny
        s = ny
    return s


def _eta(G):
    s = _sigma_max(G)
    return 1.0 / (2.0 * s + 1e-12 * max(1.0, s))


def kkt_residual(p: QpProblem, lam, eta: float | None = None) -> float:
    """||lam - P(lam - eta * grad)||, zero exactly at minimizers."""
    lam = np.asarray(lam, dtype=float)
    if np.any(lam < -1e-9) or lam.sum() > 1 + 1e-9:
        raise ValueError("kkt_residual needs a feasible point")
    eta = _eta(p.G) if eta is None else eta
    return float(np.linalg.norm(lam - simplex_project(lam - eta * p.gradient(lam))))


def _degenerate(p: QpProblem) -> np.ndarray:
    lam = np.zeros(p.M)
    j = int(np.argmax(p.b))
    if p.b[j] > 0:
        lam[j] = 1.0
    return lam


def _polish(p: QpProblem, lam):
    """Solve the KKT system on the current active face; keep the result if it improves."""
    M = p.M
    free = lam > 1e-12
    if not np.any(free):
        return lam
    on_sum = abs(lam.sum() - 1.0) < 1e-10
    idx = np.nonzero(free)[0]
    Gf = p.G[np.ix_(idx, idx)]
    bf = p.b[idx]
    k = idx.size
    if on_sum:
        A = np.zeros((k + 1, k + 1))
        A[:k, :k] = Gf
        A[:k, k] = 0.5
        A[k, :k] = 1.0
        rhs = np.concatenate([bf, [1.0]])
    else:
        A, rhs = Gf, bf
    try:
        sol = np.linalg.lstsq(A, rhs, rcond=None)[0][:k]
    except np.linalg.LinAlgError:
        return lam
    cand = np.zeros(M)
    cand[idx] = sol
    if not np.all(np.isfinite(cand)):
        return lam
    # the projection removes rounding-level infeasibility; the objective decides
    cand = simplex_project(cand)
    if p.objective(cand) <= p.objective(lam):
        return cand
    return lam


def solve_simplex_qp(p: QpProblem, record_history: bool = False) -> QpSolution:
    """Projected gradient with Barzilai-Borwein steps and Armijo backtracking."""
    G, M = p.G, p.M
    if not np.any(G):
        lam = _degenerate(p)
        return QpSolution(lam, p.objective(lam), 0.0, 0, "converged")
    eta0 = _eta(G)
    lam = simplex_project(np.full(M, 1.0 / M) * 0.5)
    f = p.objective(lam)
    g = p.gradient(lam)
    step = eta0
    hist = [f]
    status = "max_iter"
    it = 0
    res = kkt_residual(p, lam, eta0)
    for it in range(1, p.max_iter + 1):
        if res <= p.kkt_tol:
            status = "converged"
            break
        t = step
        while True:
            cand = simplex_project(lam - t * g)
            d = cand - lam
            fc = p.objective(cand)
            # sufficient decrease against the projected direction
            if fc <= f + 1e-4 * (g @ d) or t <= eta0 * 1e-3:
                break
            t *= 0.5
        if fc > f:
            # never accept an ascent step; fall back to the safe fixed step
            cand = simplex_project(lam - eta0 * g)
            fc = p.objective(cand)
            if fc > f:
                cand, fc = lam, f
        s = cand - lam
        g_new = p.gradient(cand)
        y = g_new - g
        sy = float(s @ y)
        step = float(s @ s) / sy if sy > 1e-300 else eta0
        step = min(max(step, eta0), 1e6 * eta0)
        lam, f, g = cand, fc, g_new
        hist.append(f)
        res = kkt_residual(p, lam, eta0)
        if it % 50 == 0 or res < 1e-6:
            pol = _polish(p, lam)
            if pol is not lam:
                lam, f, g = pol, p.objective(pol), p.gradient(pol)
                hist.append(f)
                res = kkt_residual(p, lam, eta0)
    else:
        it = p.max_iter
    if res <= p.kkt_tol:
        status = "converged"
    return QpSolution(lam, f, res, it, status, tuple(hist) if record_history else ())


def solve_min_norm(G, b, rank_tol: float = 1e-10) -> np.ndarray:
    """Minimum-norm least-squares solution of G x = b for symmetric G."""
    G = np.asarray(G, dtype=float)
    b = np.asarray(b, dtype=float).reshape(-1)
    scale = max(1.0, float(np.abs(G).max(initial=0.0)))
    if G.shape != (b.size, b.size) or np.abs(G - G.T).max(initial=0.0) > 1e-10 * scale:
        raise ValueError("G must be square symmetric and match b")
    w, V = np.linalg.eigh(0.5 * (G + G.T))
    smax = float(np.abs(w).max(initial=0.0))
    if smax == 0.0:
        return np.zeros_like(b)
    keep = np.abs(w) > rank_tol * smax
    coef = (V[:, keep].T @ b) / w[keep]
    return V[:, keep] @ coef
