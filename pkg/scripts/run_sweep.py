"""Success-rate sweep over a problem directory or over generated layouts.

Examples:
  python3 scripts/run_sweep.py --generate clutter:2,3,4 --seeds 20 --time-budget 60
  python3 scripts/run_sweep.py --suite problems/shelf --seeds 20 --time-budget 60
"""
from __future__ import annotations

import argparse
import csv
from pathlib import Path

from tmitstar.cli import parse_generate
from tmitstar.harness.bench import BenchConfig, layout_suite, load_suite, run_benchmark


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    src = ap.add_mutually_exclusive_group(required=True)
    src.add_argument("--suite", help="directory of problem files, each run over every seed")
    src.add_argument("--generate", metavar="KIND:N[,N...]", help="a fresh generated layout per seed")
    ap.add_argument("--seeds", type=int, default=20)
    ap.add_argument("--time-budget", type=float, default=60.0)
    ap.add_argument("--out", default=None)
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--full", action="store_true", help="keep improving after the first solution")
    args = ap.parse_args(argv)
    if args.suite:
        instances, label = load_suite(args.suite), Path(args.suite).name
    else:
        kind, sizes = parse_generate(args.generate)
        instances, label = layout_suite(kind, sizes), kind
    out = Path(args.out or Path("results") / label)
    cfg = BenchConfig(workers=args.workers, stop_on_first=not args.full)
    records = run_benchmark(instances, range(args.seeds), args.time_budget, out, cfg)
    with open(out / "summary.csv") as f:
        for row in csv.DictReader(f):
            rate = int(row["n_solved"]) / int(row["n_trials"])
            print(f"{row['instance']:>12}: {rate:6.1%} solved, median t_init {row['median_t_init']} s "
                  f"[{row['ci_lo']}, {row['ci_hi']}]")
    bad = [r for r in records if r.valid is False or r.crashed]
    print(f"{len(records)} trials, {len(bad)} invalid or crashed; artifacts in {out}")
    return 1 if bad else 0


if __name__ == "__main__":
    raise SystemExit(main())
