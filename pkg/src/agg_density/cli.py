"""Command-line interface: ``agg-density {bench,estimate,risk,grid,minimax}``."""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .aggregation import averaged_aggregate, kde_pool_factory
from .bench import ConfigError, ExperimentConfig, minimax_experiment, run_experiment, _write
from .densities import get_density, read_sample_file
from .kde import FIXED_GRID, bandwidth_grid
from .kernels import kernel_from_name
from .risk import oracle_risk


def _parse_xgrid(spec: str) -> np.ndarray:
    try:
        lo, hi, num = spec.split(":")
        return np.linspace(float(lo), float(hi), int(num))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected lo:hi:num, got {spec!r}") from None


def _sizes(spec: str) -> list:
    return [int(float(v)) for v in spec.split(",") if v.strip()]


def cmd_bench(args) -> int:
    try:
        cfg = ExperimentConfig.load(args.config)
    except (OSError, ConfigError, json.JSONDecodeError, TypeError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    if args.fast:
        cfg.fast = True
    out = args.out or cfg.out or "."
    report = run_experiment(cfg, out)
    if cfg.fast:
        print(f"FAST MODE: R={cfg.effective_R} replications per cell, tolerances widened")
    for c in report.cells:
        if c.status == "ok":
            print(f"{c.estimator:>10s} n={c.n:<6d} mise={c.report.mise:.6e} se={c.report.stderr:.2e}")
        else:
            print(f"{c.estimator:>10s} n={c.n:<6d} FAILED: {c.reason}")
    print(f"wrote {Path(out) / (cfg.name + '.csv')}")
    return 0 if report.ok else 1


def cmd_estimate(args) -> int:
    sample = read_sample_file(args.input)
    if sample.d != 1:
        print("estimate supports one-dimensional samples", file=sys.stderr)
        return 2
    kernel = kernel_from_name(args.kernel)
    grid = FIXED_GRID if args.grid == "fixed" else bandwidth_grid(sample.n, 1, args.a0).bandwidths
    scheme = "equal_halves" if args.scheme == "equal" else args.scheme
    agg = averaged_aggregate(sample, kde_pool_factory(grid, kernel), scheme, args.splits, args.mode,
                             seed=args.seed)
    x = args.x if args.x is not None else np.linspace(sample.points.min() - 1, sample.points.max() + 1, 512)
    y = agg(x)
    out = Path(args.out)
    lines = ["x,density"] + ["%.6e,%.6e" % (a, b) for a, b in zip(x, y)]
    _write(out, "\n".join(lines) + "\n")
    side = {"input": str(args.input), "bandwidths": list(grid), "kernel": kernel.name, "scheme": scheme,
            "seed": args.seed, **agg.to_dict()}
    _write(out.with_suffix(".json"), json.dumps(side, indent=2) + "\n")
    print(f"wrote {out} and {out.with_suffix('.json')}")
    return 0


def cmd_risk(args) -> int:
    truth = get_density(args.density)
    grid = FIXED_GRID if args.grid == "fixed" else bandwidth_grid(args.n, 1, args.a0).bandwidths
    res = oracle_risk(grid, kernel_from_name(args.kernel), truth, args.n, args.R, seed=args.seed)
    lines = ["h,mise,stderr"] + ["%.6e,%.6e,%.6e" % (h, c.mise, c.stderr) for h, c in zip(sorted(grid), res.curve)]
    text = "\n".join(lines) + "\n"
    if args.out:
        _write(args.out, text)
    else:
        sys.stdout.write(text)
    return 0


def cmd_grid(args) -> int:
    g = bandwidth_grid(args.n, args.d, args.a0)
    sys.stdout.write("index,h\n" + "".join("%d,%.17g\n" % (i, h) for i, h in enumerate(g.bandwidths)))
    return 0


def cmd_minimax(args) -> int:
    try:
        rep = minimax_experiment(args.beta, args.Q, _sizes(args.n), args.R, args.seed, args.density,
                                 args.aggregate_max_n, args.aggregate_R)
    except ValueError as exc:
        print(f"rejected: {exc}", file=sys.stderr)
        return 2
    text = rep.to_csv()
    if args.out:
        out = Path(args.out)
        _write(out / "minimax.csv", text)
        _write(out / "minimax.json", json.dumps(rep.to_dict(), indent=2) + "\n")
    sys.stdout.write(text)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="agg-density", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    b = sub.add_parser("bench", help="run a Monte-Carlo MISE table from a JSON config")
    b.add_argument("--config", required=True)
    b.add_argument("--out", help="output directory (overrides the config)")
    b.add_argument("--fast", action="store_true", help="cap replications at 50 per cell")
    b.set_defaults(func=cmd_bench)

    e = sub.add_parser("estimate", help="averaged aggregate of a sample file")
    e.add_argument("--input", required=True, help="whitespace-separated sample, '#' comments")
    e.add_argument("--out", required=True, help="CSV path; a JSON sidecar is written next to it")
    e.add_argument("--mode", choices=("linear", "convex"), default="convex")
    e.add_argument("--splits", type=int, default=10)
    e.add_argument("--scheme", choices=("equal", "asymptotic"), default="equal")
    e.add_argument("--grid", choices=("fixed", "parametric"), default="fixed")
    e.add_argument("--kernel", default="gaussian")
    e.add_argument("--a0", type=float, default=1.0)
    e.add_argument("--seed", type=int, required=True)
    e.add_argument("--x", type=_parse_xgrid, help="evaluation grid lo:hi:num")
    e.set_defaults(func=cmd_estimate)

    r = sub.add_parser("risk", help="per-bandwidth MISE curve as CSV")
    r.add_argument("--density", default="gaussian")
    r.add_argument("--n", type=int, required=True)
    r.add_argument("--R", type=int, default=200)
    r.add_argument("--grid", choices=("fixed", "parametric"), default="fixed")
    r.add_argument("--kernel", default="gaussian")
    r.add_argument("--a0", type=float, default=1.0)
    r.add_argument("--seed", type=int, required=True)
    r.add_argument("--out")
    r.set_defaults(func=cmd_risk)

    g = sub.add_parser("grid", help="print the parametric bandwidth grid")
    g.add_argument("--n", type=int, required=True)
    g.add_argument("--d", type=int, default=1)
    g.add_argument("--a0", type=float, default=1.0)
    g.set_defaults(func=cmd_grid)

    m = sub.add_parser("minimax", help="Pinsker-kernel risk against the minimax bound")
    m.add_argument("--beta", type=float, default=2.0)
    m.add_argument("--Q", type=float, default=None, help="defaults to the density's Sobolev functional")
    m.add_argument("--n", default="1000,10000", help="comma-separated sizes")
    m.add_argument("--R", type=int, default=200)
    m.add_argument("--density", default="gaussian")
    m.add_argument("--seed", type=int, required=True)
    m.add_argument("--aggregate-max-n", type=int, default=0)
    m.add_argument("--aggregate-R", type=int, default=20)
    m.add_argument("--out")
    m.set_defaults(func=cmd_minimax)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (OSError, KeyError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
