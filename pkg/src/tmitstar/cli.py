"""Command line: ``tmitstar plan | gen | validate | bench``."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from tmitstar.harness.bench import (BenchConfig, TrialRecord, fmt, layout_suite, load_suite,
                                    planner_config, run_benchmark, write_results)
from tmitstar.harness.planio import load_plan, save_plan
from tmitstar.harness.svg import render_svg
from tmitstar.harness.validate import validate_solution
from tmitstar.search.anytime import TMITStar
from tmitstar.world2d.generate import GenerationError, generate_instance
from tmitstar.world2d.problem import ProblemError, dumps_problem, load_problem


def _planner_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--time-budget", type=float, required=True, help="seconds on the chosen clock")
    p.add_argument("--batch-size", type=int, default=50)
    p.add_argument("--batch-budget", type=int, default=None,
                   help="batches per candidate plan (default: 2 for shelf, 5 otherwise)")
    p.add_argument("--attempt-budget", type=int, default=1)
    p.add_argument("--mu", type=float, default=None, help="projection gate (default: connection radius)")
    p.add_argument("--clock", choices=("wall", "work"), default="wall",
                   help="'work' is a deterministic effort-based clock")


def _bench_config(args) -> BenchConfig:
    return BenchConfig(clock=args.clock, batch_size=args.batch_size, batch_budget=args.batch_budget,
                       attempt_budget=args.attempt_budget, mu=args.mu)


def cmd_plan(args) -> int:
    problem = load_problem(args.problem)
    cfg = planner_config(problem, args.seed, _bench_config(args))
    cfg.stop_on_first = args.stop_on_first
    cfg.max_batches = args.max_batches
    planner = TMITStar(problem, cfg)
    result = planner.run(args.time_budget)
    for imp in result.improvements:
        print(f"t={imp.t:.3f} cost={imp.cost:.4f} actions={len(imp.path.actions)}")
    print(f"{result.outcome}: initial_t={fmt(result.initial_time)} final_cost={fmt(result.final_cost)} "
          f"batches={result.counters.batches}")
    if result.best is not None:
        for a in result.best.path.actions:
            print(f"  {a.name}")
    if args.output:
        out = Path(args.output)
        out.mkdir(parents=True, exist_ok=True)
        rec = TrialRecord(problem.name, args.seed, args.time_budget,
                          [(i.t, i.cost) for i in result.improvements], result.outcome, result.t_end,
                          result.counters.as_dict())
        write_results([rec], out / "results.csv")
        best = result.best.path if result.best else None
        (out / "trace.svg").write_text(render_svg(problem, best, f"{problem.name} seed {args.seed}"))
        if best is not None:
            save_plan(best, problem, out / "plan.json")
        if args.trace:
            (out / "trace.json").write_text(json.dumps(
                {"counters": result.counters.as_dict(), "batches": result.trace,
                 "plans": [pl.names() for pl in result.plans],
                 "prefix_blocks": result.prefix_blocks}, indent=1) + "\n")
    return 0 if result.outcome == "Solved" else 1


def cmd_gen(args) -> int:
    data = generate_instance(args.kind, args.objects, args.seed)
    text = dumps_problem(data)
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return 0


def cmd_validate(args) -> int:
    problem = load_problem(args.problem)
    report = validate_solution(load_plan(args.plan, problem), problem)
    print(report)
    return 0 if report.valid else 1


def parse_generate(spec: str) -> tuple[str, list[int]]:
    """``"clutter:2,3,4"`` -> ``("clutter", [2, 3, 4])``."""
    kind, _, sizes = spec.partition(":")
    if kind not in ("clutter", "shelf") or not sizes:
        raise ValueError(f"expected KIND:N[,N...] with KIND clutter or shelf, got {spec!r}")
    return kind, [int(n) for n in sizes.split(",")]


def cmd_bench(args) -> int:
    if args.suite:
        instances = load_suite(args.suite)
        default_out = Path(args.suite) / "bench_out"
    else:
        instances = layout_suite(*parse_generate(args.generate))
        default_out = Path("bench_out")
    cfg = _bench_config(args)
    cfg.workers = args.workers
    cfg.svg = not args.no_svg
    cfg.stop_on_first = args.stop_on_first
    out = Path(args.out or default_out)
    records = run_benchmark(instances, range(args.seeds), args.time_budget, out, cfg)
    print((out / "summary.csv").read_text(), end="")
    invalid = [r for r in records if r.valid is False]
    crashed = [r for r in records if r.crashed]
    if invalid or crashed:
        print(f"{len(invalid)} invalid and {len(crashed)} crashed trials", file=sys.stderr)
        return 1
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tmitstar", description="Anytime task and motion planner")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("plan", help="plan one problem")
    p.add_argument("--problem", required=True)
    p.add_argument("--seed", type=int, default=0)
    _planner_args(p)
    p.add_argument("--output", help="directory for results.csv, plan.json, trace.svg")
    p.add_argument("--trace", action="store_true", help="also write per-batch trace.json")
    p.add_argument("--stop-on-first", action="store_true", help="stop at the first solution")
    p.add_argument("--max-batches", type=int, default=None)
    p.set_defaults(func=cmd_plan)

    p = sub.add_parser("gen", help="generate a benchmark instance")
    p.add_argument("--kind", choices=("clutter", "shelf"), required=True)
    p.add_argument("--objects", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="output file (default: stdout)")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("validate", help="check a plan file against a problem")
    p.add_argument("--problem", required=True)
    p.add_argument("--plan", required=True)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("bench", help="run every problem of a directory over several seeds")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--suite", help="directory of problem files")
    src.add_argument("--generate", metavar="KIND:N[,N...]",
                     help="generated instances, a fresh layout per seed (e.g. clutter:2,3,4)")
    p.add_argument("--seeds", type=int, required=True)
    _planner_args(p)
    p.add_argument("--out", help="output directory (default: SUITE/bench_out or ./bench_out)")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--no-svg", action="store_true")
    p.add_argument("--stop-on-first", action="store_true", help="end each trial at its first solution")
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ProblemError, GenerationError, FileNotFoundError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
