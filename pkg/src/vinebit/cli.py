"""Command line entry points: bench run / summarize / image."""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace

import numpy as np

from . import bench, pgm
from .wavelet import PyramidLayout, synthesize


def _cmd_run(args) -> int:
    spec = bench.parse_spec(args.spec)
    overrides = {}
    if args.trials is not None:
        overrides["trials"] = args.trials
    if args.workers is not None:
        overrides["workers"] = args.workers
    if overrides:
        spec = replace(spec, **overrides)
    rows, path = bench.run_sweep(spec)
    failures = sum(r["status"] != "ok" for r in rows)
    print(f"wrote {len(rows)} rows to {path}")
    if failures:
        print(f"{failures} cell runs failed", file=sys.stderr)
        return 3
    return 0


def _cmd_summarize(args) -> int:
    stats, plot_path = bench.summarize(args.csv, args.out)
    print(f"{'algorithm':>12} {'rate':>6} {'cells':>6} {'fail':>5} {'median_snr':>11} {'iqr':>8}")
    for s in stats:
        print(
            f"{s['algorithm']:>12} {s['rate']:>6g} {s['cells']:>6d} {s['failures']:>5d} "
            f"{s['median_snr_db']:>11.3f} {s['iqr_snr_db']:>8.3f}"
        )
    print(f"plot data: {plot_path}")
    return 0


def _cmd_image(args) -> int:
    layout = PyramidLayout((args.rows, args.cols), args.levels)
    pyramid = bench.synthesize_test_image(args.kind, layout, args.seed, args.rho)
    img = synthesize(pyramid)
    lo, hi = float(img.min()), float(img.max())
    if hi > lo:
        img = (img - lo) / (hi - lo)
    pgm.write_pgm(args.out, img)
    print(f"wrote {args.rows}x{args.cols} {args.kind} image to {args.out}")
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="bench", description="one-bit recovery benchmarks")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a rate sweep from a spec file")
    p_run.add_argument("--spec", required=True, help="key=value experiment spec file")
    p_run.add_argument("--trials", type=int, default=None, help="override trial count")
    p_run.add_argument("--workers", type=int, default=None, help="override worker count")
    p_run.set_defaults(func=_cmd_run)

    p_sum = sub.add_parser("summarize", help="aggregate a results CSV")
    p_sum.add_argument("csv", help="results.csv from a sweep")
    p_sum.add_argument("--out", default=None, help="directory for plot data")
    p_sum.set_defaults(func=_cmd_summarize)

    p_img = sub.add_parser("image", help="write a synthetic test image as PGM")
    p_img.add_argument("--kind", required=True, choices=bench.SYNTHETIC_KINDS)
    p_img.add_argument("--out", required=True)
    p_img.add_argument("--rows", type=int, default=32)
    p_img.add_argument("--cols", type=int, default=32)
    p_img.add_argument("--levels", type=int, default=2)
    p_img.add_argument("--seed", type=int, default=0)
    p_img.add_argument("--rho", type=float, default=0.6)
    p_img.set_defaults(func=_cmd_image)

    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
