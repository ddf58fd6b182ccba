"""Monte-Carlo experiment runner: MISE tables, split-sensitivity sweeps, minimax checks."""
from __future__ import annotations

import csv
import io
import json
import math
import platform
import time
import traceback
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np

from . import __version__
from ._parallel import thread_count
from .aggregation import averaged_aggregate, kde_pool_factory, multi_kernel_pool
from .densities import DENSITY_IDS, DensityModel, get_density
from .kde import (
    FIXED_GRID,
    bandwidth_grid,
    fit_kde,
    fourier_mise,
    minimax_quantities,
    sobolev_functional,
)
from .kernels import PinskerKernel, kernel_from_name, pinsker_family
from .risk import MiseReport, QuadratureSpec, mise_mc, nrd, nrd0, oracle_risk, ucv_select

TABLE_COLUMNS = ("estimator", "n", "mise", "stderr", "seed")
ROSTER = ("aggpure", "agglinear", "oracle", "ucv", "nrd0", "nrd")
FAST_R = 50


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    density: str
    sizes: list
    seed: int
    R: int = 200
    estimators: list = field(default_factory=lambda: ["aggpure", "oracle"])
    grid: Union[str, list] = "fixed"
    kernel: str = "gaussian"
    scheme: Union[str, float] = "equal_halves"
    splits: int = 10
    a0: float = 1.0
    ise_method: str = "auto"
    quad_nodes: int = 4096
    quad_rule: str = "trapezoid"
    out: Optional[str] = None
    fast: bool = False
    name: str = "experiment"

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.seed is None:
            raise ConfigError("a master seed is required")
        if not (self.density in DENSITY_IDS or str(self.density).endswith(".json")):
            raise ConfigError(f"unknown density id {self.density!r}")
        if not self.sizes or any(int(n) < 3 for n in self.sizes):
            raise ConfigError("sample sizes must be >= 3")
        self.sizes = [int(n) for n in self.sizes]
        if int(self.R) < 2:
            raise ConfigError("R must be >= 2")
        for e in self.estimators:
            if e not in ROSTER and not e.startswith("kde:"):
                raise ConfigError(f"unknown estimator {e!r}")
            if e.startswith("kde:"):
                try:
                    if float(e[4:]) <= 0:
                        raise ValueError
                except ValueError:
                    raise ConfigError(f"bad single-bandwidth estimator {e!r}") from None
        if isinstance(self.grid, str):
            if self.grid not in ("fixed", "parametric"):
                raise ConfigError(f"unknown grid {self.grid!r}")
        elif not self.grid or any(float(h) <= 0 for h in self.grid):
            raise ConfigError("explicit grids must be nonempty and positive")
        try:
            kernel_from_name(self.kernel)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        if not (self.scheme in ("equal_halves", "equal", "asymptotic") or
                (isinstance(self.scheme, float) and 0 < self.scheme < 1)):
            raise ConfigError(f"unknown split scheme {self.scheme!r}")
        if int(self.splits) < 1:
            raise ConfigError("splits must be >= 1")
        if not self.a0 > 0:
            raise ConfigError("a0 must be positive")

    @property
    def effective_R(self) -> int:
        return min(self.R, FAST_R) if self.fast else self.R

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        extra = set(data) - known
        if extra:
            raise ConfigError(f"unknown config keys: {sorted(extra)}")
        missing = {"density", "sizes", "seed"} - set(data)
        if missing:
            raise ConfigError(f"missing config keys: {sorted(missing)}")
        return cls(**data)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))

    def to_dict(self) -> dict:
        out = asdict(self)
        out["effective_R"] = self.effective_R
        out["quadrature"] = {"nodes": self.quad_nodes, "rule": self.quad_rule}
        out["qp"] = {"kkt_tol": 1e-8, "max_iter": 100_000}
        out["linear_rank_tol"] = 1e-10
        out["aggpure_mode"] = "convex"
        return out

    def bandwidths(self, n: int) -> tuple:
        if self.grid == "fixed":
            return FIXED_GRID
        if self.grid == "parametric":
            return bandwidth_grid(n, 1, self.a0).bandwidths
        return tuple(float(h) for h in self.grid)


@dataclass
class CellResult:
    estimator: str
    n: int
    status: str
    report: Optional[MiseReport] = None
    reason: str = ""
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        out = {"estimator": self.estimator, "n": self.n, "status": self.status}
        if self.report is not None:
            out.update(self.report.to_dict())
        if self.reason:
            out["reason"] = self.reason
        out.update(self.extra)
        return out


@dataclass
class BenchReport:
    config: dict
    cells: list
    runtime: dict
    version: str = __version__

    @property
    def ok(self) -> bool:
        return all(c.status == "ok" for c in self.cells)

    def cell(self, estimator: str, n: int) -> CellResult:
        for c in self.cells:
            if c.estimator == estimator and c.n == n:
                return c
        raise KeyError((estimator, n))

    def to_dict(self) -> dict:
        return {"version": self.version, "config": self.config, "runtime": self.runtime,
                "cells": [c.to_dict() for c in self.cells]}


def _builder(cfg: ExperimentConfig, name: str, n: int):
    kernel = kernel_from_name(cfg.kernel)
    if name in ("aggpure", "agglinear"):
        factory = kde_pool_factory(cfg.bandwidths(n), kernel)
        mode = "convex" if name == "aggpure" else "linear"
        return lambda s: averaged_aggregate(s, factory, cfg.scheme, cfg.splits, mode)
    if name == "ucv":
        return lambda s: fit_kde(s, ucv_select(s, kernel), kernel)
    if name == "nrd0":
        return lambda s: fit_kde(s, nrd0(s), kernel)
    if name == "nrd":
        return lambda s: fit_kde(s, nrd(s), kernel)
    if name.startswith("kde:"):
        h = float(name[4:])
        return lambda s: fit_kde(s, h, kernel)
    raise ConfigError(f"no builder for {name!r}")


def run_cell(cfg: ExperimentConfig, truth: DensityModel, name: str, n: int, threads=None) -> CellResult:
    quad = QuadratureSpec.for_model(truth, cfg.quad_nodes, cfg.quad_rule)
    R = cfg.effective_R
    try:
        if name == "oracle":
            res = oracle_risk(cfg.bandwidths(n), kernel_from_name(cfg.kernel), truth, n, R, quad, cfg.seed,
                              cfg.ise_method, threads)
            curve = [{"h": float(h), "mise": c.mise, "stderr": c.stderr}
                     for h, c in zip(sorted(cfg.bandwidths(n)), res.curve)]
            return CellResult(name, n, "ok", res.report, extra={"best_h": res.best_h, "curve": curve})
        rep = mise_mc(_builder(cfg, name, n), truth, n, R, quad, cfg.seed, name, cfg.ise_method, threads)
        return CellResult(name, n, "ok", rep)
    except Exception as exc:  # isolate per-cell failures
        return CellResult(name, n, "failed", reason=f"{type(exc).__name__}: {exc}",
                          extra={"traceback": traceback.format_exc(limit=3)})


def run_experiment(cfg: ExperimentConfig, out_dir=None, threads=None) -> BenchReport:
    """Every (estimator, n) cell on shared samples; writes CSV and JSON when an output dir is given."""
    t0 = time.perf_counter()
    truth = get_density(cfg.density)
    cells = [run_cell(cfg, truth, name, n, threads) for n in cfg.sizes for name in cfg.estimators]
    runtime = {
        "wall_time": time.perf_counter() - t0,
        "threads": thread_count(threads),
        "python": platform.python_version(),
        "numpy": np.__version__,
        "fast": cfg.fast,
    }
    report = BenchReport(cfg.to_dict(), cells, runtime)
    out_dir = out_dir or cfg.out
    if out_dir:
        write_report(report, out_dir, cfg.name)
    return report


def _fmt(v) -> str:
    return "%.6e" % v if v is not None and math.isfinite(v) else "nan"


def emit_table(report: BenchReport, path=None) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TABLE_COLUMNS)
    for c in report.cells:
        r = c.report
        w.writerow([c.estimator, c.n, _fmt(r.mise if r else None), _fmt(r.stderr if r else None),
                    report.config["seed"]])
    text = buf.getvalue()
    if path is not None:
        _write(path, text)
    return text


def emit_plot_data(report, path=None) -> str:
    """(series, x, y) rows for bench reports, (x, y, z) rows for sweeps."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    if isinstance(report, SweepReport):
        w.writerow(("splits", "train_fraction", "mise"))
        for (k, f), r in sorted(report.cells.items()):
            w.writerow((k, "%.6e" % f, _fmt(r.mise)))
    else:
        w.writerow(("series", "x", "y"))
        for c in report.cells:
            w.writerow((c.estimator, c.n, _fmt(c.report.mise if c.report else None)))
    text = buf.getvalue()
    if path is not None:
        _write(path, text)
    return text


def _write(path, text: str):
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc


def write_report(report: BenchReport, out_dir, name: str = "experiment") -> dict:
    out = Path(out_dir)
    paths = {"table": out / f"{name}.csv", "report": out / f"{name}.json", "plot": out / f"{name}_plot.csv"}
    emit_table(report, paths["table"])
    emit_plot_data(report, paths["plot"])
    _write(paths["report"], json.dumps(report.to_dict(), indent=2, default=_json_default) + "\n")
    return paths


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(type(o).__name__)


# ---------------------------------------------------------------- split sensitivity


@dataclass
class SweepReport:
    config: dict
    split_counts: list
    fractions: list
    cells: dict

    def matrix_csv(self) -> str:
        """Rows are training fractions, columns split counts."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["train_fraction"] + [str(k) for k in self.split_counts])
        for f in self.fractions:
            w.writerow(["%.6e" % f] + [_fmt(self.cells[(k, f)].mise) for k in self.split_counts])
        return buf.getvalue()

    def to_dict(self) -> dict:
        return {"config": self.config, "split_counts": self.split_counts, "fractions": self.fractions,
                "cells": [{"splits": k, "train_fraction": f, **r.to_dict()} for (k, f), r in sorted(self.cells.items())]}


def split_sensitivity(cfg: ExperimentConfig, split_counts: Sequence[int], fractions: Sequence[float],
                      n: Optional[int] = None, threads=None) -> SweepReport:
    """AggPure MISE over (number of splits, training fraction) on shared samples."""
    truth = get_density(cfg.density)
    n = n or cfg.sizes[0]
    quad = QuadratureSpec.for_model(truth, cfg.quad_nodes, cfg.quad_rule)
    kernel = kernel_from_name(cfg.kernel)
    factory = kde_pool_factory(cfg.bandwidths(n), kernel)
    cells = {}
    for k in split_counts:
        for f in fractions:
            scheme = cfg.scheme if f is None else float(f)
            cells[(int(k), float(f))] = mise_mc(
                lambda s, k=k, scheme=scheme: averaged_aggregate(s, factory, scheme, int(k), "convex"),
                truth, n, cfg.effective_R, quad, cfg.seed, f"aggpure[{k},{f:g}]", cfg.ise_method, threads)
    return SweepReport(cfg.to_dict(), [int(k) for k in split_counts], [float(f) for f in fractions], cells)


# ---------------------------------------------------------------- minimax


@dataclass
class MinimaxRow:
    n: int
    h_star: float
    bound: float
    kde: MiseReport
    ratio: float
    exact_mise: float
    aggregate: Optional[MiseReport] = None
    aggregate_ratio: Optional[float] = None

    def to_dict(self) -> dict:
        out = {"n": self.n, "h_star": self.h_star, "bound": self.bound, "kde_mise": self.kde.mise,
               "kde_stderr": self.kde.stderr, "ratio": self.ratio, "exact_mise": self.exact_mise,
               "exact_ratio": self.exact_mise / self.bound}
        if self.aggregate is not None:
            out.update(aggregate_mise=self.aggregate.mise, aggregate_stderr=self.aggregate.stderr,
                       aggregate_ratio=self.aggregate_ratio)
        return out


@dataclass
class MinimaxReport:
    beta: float
    Q: float
    sobolev_value: float
    C_star: float
    D_star: float
    rows: list
    seed: int

    def to_dict(self) -> dict:
        return {"beta": self.beta, "Q": self.Q, "sobolev_value": self.sobolev_value, "C_star": self.C_star,
                "D_star": self.D_star, "seed": self.seed, "rows": [r.to_dict() for r in self.rows]}

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(("n", "h_star", "bound", "mise", "stderr", "ratio", "exact_mise"))
        for r in self.rows:
            w.writerow((r.n, _fmt(r.h_star), _fmt(r.bound), _fmt(r.kde.mise), _fmt(r.kde.stderr), _fmt(r.ratio),
                        _fmt(r.exact_mise)))
        return buf.getvalue()


def minimax_experiment(beta: float, Q: Optional[float], sizes: Sequence[int], R: int, seed: int,
                       density: str = "gaussian", aggregate_max_n: int = 0, aggregate_R: int = 20,
                       family_size: int = 3, threads=None) -> MinimaxReport:
    """Pinsker-kernel KDE at h*(n) against C* n^{-2 beta/(2 beta + 1)}.

    With ``aggregate_max_n > 0`` the aggregate over the Pinsker pool and the
    parametric grid is also measured for sizes up to that bound (its Gram
    matrix costs grow like n log n per component).
    """
    truth = get_density(density)
    if truth.d != 1:
        raise ValueError("minimax experiments are one-dimensional")
    value = sobolev_functional(truth, beta)
    Q = value if Q is None else float(Q)
    if value > Q * (1 + 1e-12):
        raise ValueError(f"Sobolev functional {value:.6g} exceeds Q = {Q:.6g}")
    mq = minimax_quantities(beta, Q, 1)
    kernel = PinskerKernel(beta, 1)
    rows = []
    for n in sizes:
        h = mq.bandwidth(n)
        bound = mq.risk_bound(n)
        rep = mise_mc(lambda s, h=h: fit_kde(s, h, kernel), truth, n, R, None, seed, f"pinsker:{beta:g}",
                      "fourier", threads)
        exact = fourier_mise(kernel, h, n, truth)
        row = MinimaxRow(n, h, bound, rep, rep.mise / bound, exact)
        if aggregate_max_n and n <= aggregate_max_n:
            grid = bandwidth_grid(n, 1)
            factory = multi_kernel_pool(pinsker_family(family_size, 1), grid)
            agg = mise_mc(lambda s: averaged_aggregate(s, factory, "asymptotic", 1, "convex"), truth, n,
                          aggregate_R, None, seed, "pinsker_pool", "fourier", threads)
            row.aggregate, row.aggregate_ratio = agg, agg.mise / bound
        rows.append(row)
    return MinimaxReport(beta, Q, value, mq.C_star, mq.D_star, rows, int(seed))
