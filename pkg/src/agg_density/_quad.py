"""Composite Gauss-Legendre rules shared by the Fourier and spatial integrators."""
from __future__ import annotations

from functools import lru_cache

import numpy as np


@lru_cache(maxsize=32)
def _gl(order: int):
    x, w = np.polynomial.legendre.leggauss(order)
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


def panel_rule(edges, order: int = 16):
    """Nodes and weights of a Gauss-Legendre rule on each panel between sorted edges."""
    edges = np.asarray(edges, dtype=float)
    x, w = _gl(order)
    left, right = edges[:-1], edges[1:]
    half = 0.5 * (right - left)
    mid = 0.5 * (right + left)
    nodes = (mid[:, None] + half[:, None] * x[None, :]).ravel()
    weights = (half[:, None] * w[None, :]).ravel()
    return nodes, weights


def panel_edges(a: float, b: float, width: float, breakpoints=()):
    """Edges covering [a, b] with panels no wider than ``width``, split at breakpoints."""
    if not b > a:
        raise ValueError("need b > a")
    cuts = [a, b] + [float(p) for p in breakpoints if a < p < b]
    cuts = np.unique(np.asarray(cuts, dtype=float))
    out = [cuts[:1]]
    for lo, hi in zip(cuts[:-1], cuts[1:]):
        k = max(1, int(np.ceil((hi - lo) / width)))
        out.append(np.linspace(lo, hi, k + 1)[1:])
    return np.concatenate(out)


def graded_edges(a: float, b: float, width: float, levels: int = 40):
    """Like :func:`panel_edges` but geometrically refined toward ``a``.

    Used for integrands with an algebraic endpoint singularity at ``a``.
    """
    edges = panel_edges(a, b, width)
    first = edges[1] - a
    fine = a + first * 0.5 ** np.arange(levels, 0, -1)
    return np.concatenate([[a], fine, edges[1:]])


def uniform_rule(a: float, b: float, nodes: int, rule: str = "trapezoid", order: int = 8):
    """Fixed rule on [a, b] with approximately ``nodes`` points."""
    if rule == "trapezoid":
        x = np.linspace(a, b, nodes)
        w = np.full(nodes, (b - a) / (nodes - 1))
        w[0] *= 0.5
        w[-1] *= 0.5
        return x, w
    if rule == "gauss_legendre_composite":
        panels = max(1, nodes // order)
        return panel_rule(np.linspace(a, b, panels + 1), order)
    raise ValueError(f"unknown quadrature rule {rule!r}")
