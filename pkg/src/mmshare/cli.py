"""Command line entry point: ``mmshare run|ccdf|compare``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import harness
from .association import ProblemId

log = logging.getLogger("mmshare")


def _run(args) -> int:
    grid = harness.load_grid(args.grid, preset=args.preset, seeds=args.seeds)
    total = grid.size * grid.n_topologies
    done = 0

    def progress(t: harness.TrialResult) -> None:
        nonlocal done
        done += 1
        status = "ok" if t.ok else f"FAILED ({t.error})"
        log.info("[%d/%d] cell %d seed %d %.1fs %s", done, total, t.cell, t.seed, t.wall_time,
                 status)

    rows = harness.run_experiment(grid, args.out, jobs=args.jobs, backend=args.backend,
                                  progress=progress)
    failed = [r for r in rows if r.seed == "all" and not r.ok]
    for r in rows:
        if r.seed == "all":
            print(f"cell {r.cell:3d} {r.status:6s} mean {r.mean_rate:.4g} bit/s  "
                  f"p5/50/95 {r.p5:.3g}/{r.p50:.3g}/{r.p95:.3g}  {r.label}")
    print(f"report: {Path(args.out) / 'report.csv'}")
    return 1 if failed else 0


def _report_dir(report: str) -> Path:
    p = Path(report)
    return p if p.is_dir() else p.parent


def _ccdf(args) -> int:
    trials = harness.load_trials(_report_dir(args.report), cell=args.cell)
    rates = [t.rates for t in trials.values() if t.ok]
    if not rates:
        print(f"no per-UE results for cell {args.cell}", file=sys.stderr)
        return 1
    import numpy as np

    values, prob = harness.ccdf(np.concatenate(rates))
    print("rate,probability")
    for v, p in zip(values, prob):
        print(f"{float(v)!r},{float(p)!r}")
    return 0


def _compare(args) -> int:
    report = Path(args.report)
    if report.is_dir():
        report = report / "report.csv"
    rows = [r for r in harness.read_report(report) if args.per_seed or r.seed == "all"]
    try:
        table = harness.compare_to_baseline(rows, args.baseline)
    except harness.MissingBaselineError as exc:
        print(f"error: {exc.args[0]}", file=sys.stderr)
        return 1
    print("cell,baseline_cell,seed,mean_rate,p5,p50,p95")
    for c in table:
        vals = ["undefined" if c.ratios[q] is None else f"{c.ratios[q]:.6g}"
                for q in ("mean_rate", "p5", "p50", "p95")]
        print(",".join([str(c.cell), str(c.baseline_cell), c.seed] + vals))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mmshare",
                                     description="mmWave spectrum sharing experiments")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a grid of experiments")
    run.add_argument("grid", help="key/value grid file")
    run.add_argument("--out", required=True, help="output directory (resumable)")
    run.add_argument("--seeds", type=int, default=None, help="topologies per cell")
    run.add_argument("--preset", choices=sorted(harness.PRESETS), default="desk")
    run.add_argument("--jobs", type=int, default=1, help="worker processes")
    run.add_argument("--backend", choices=("compiled", "python"), default=None,
                     help="kernel backend (default: compiled when built)")
    run.set_defaults(func=_run)

    cc = sub.add_parser("ccdf", help="rate CCDF of one cell, pooled over seeds")
    cc.add_argument("report", help="report.csv or its directory")
    cc.add_argument("--cell", type=int, required=True)
    cc.set_defaults(func=_ccdf)

    cmp_ = sub.add_parser("compare", help="percentile ratios against a baseline problem")
    cmp_.add_argument("report", help="report.csv or its directory")
    cmp_.add_argument("--baseline", default="P3", type=str.upper,
                      choices=[p.value for p in ProblemId])
    cmp_.add_argument("--per-seed", action="store_true", help="compare every seed row")
    cmp_.set_defaults(func=_compare)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(message)s", stream=sys.stderr)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
