"""Half-line Fourier integration of empirical characteristic functions (d = 1)."""
from __future__ import annotations

import numpy as np

from ._quad import panel_edges, panel_rule

_CHUNK = 2_000_000


def ecf_sum(points, weights, t):
    """sum_i w_i exp(i t X_i) for 1-d points, chunked over t."""
    x = np.asarray(points, dtype=float).reshape(-1)
    w = np.asarray(weights, dtype=float).reshape(-1)
    t = np.asarray(t, dtype=float)
    out = np.empty(t.size, dtype=complex)
    step = max(1, _CHUNK // max(1, x.size))
    for i in range(0, t.size, step):
        ph = np.outer(t[i : i + step], x)
        out[i : i + step] = np.cos(ph) @ w + 1j * (np.sin(ph) @ w)
    return out


def half_line_rule(T: float, span: float, breakpoints=(), h_max: float = 1.0, refine: int = 1, order: int = 16):
    """Composite Gauss-Legendre rule on [0, T].

    Panels are at most ``8 / span`` wide so that exp(i t u) with |u| <= span is
    resolved to machine precision; ``refine`` divides that width further.
    """
    width = min(8.0 / max(span, 1.0), 1.0, 2.0 / h_max) / refine
    return panel_rule(panel_edges(0.0, T, width, breakpoints), order)
