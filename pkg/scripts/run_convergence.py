"""Anytime convergence on a 1-object instance against the grid oracle's cost bracket."""
from __future__ import annotations

import argparse
import json
import statistics
from pathlib import Path

from tmitstar.harness.bench import BenchConfig, read_results, run_benchmark, trials_from_rows
from tmitstar.harness.oracles import grid_tmp_oracle
from tmitstar.world2d.problem import load_problem


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--problem", default="problems/clutter/clutter_1.json")
    ap.add_argument("--seeds", type=int, default=20)
    ap.add_argument("--time-budget", type=float, default=120.0)
    ap.add_argument("--resolution", type=float, default=0.1)
    ap.add_argument("--out", default="results/convergence")
    args = ap.parse_args(argv)
    problem = load_problem(args.problem)
    bracket = grid_tmp_oracle(problem, args.resolution)
    print(f"grid oracle at {args.resolution}: upper {bracket.upper:.4f}, lower {bracket.lower:.4f}")
    data = json.loads(Path(args.problem).read_text())
    run_benchmark([(problem.name, data)], range(args.seeds), args.time_budget, Path(args.out), BenchConfig())
    trials = trials_from_rows(read_results(Path(args.out) / "results.csv"))[problem.name]
    finals = [t.final_cost for t in trials.values()]
    initials = [t.improvements[0][1] if t.improvements else float("inf") for t in trials.values()]
    med = statistics.median(finals)
    print(f"median initial {statistics.median(initials):.4f}, median final {med:.4f} "
          f"({100 * (med / bracket.upper - 1):+.2f}% vs upper bound)")
    print(f"strict improvement in {sum(f < i for f, i in zip(finals, initials))}/{len(finals)} seeds")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
