"""Benchmark runner: trials, CSV artifacts and per-trial SVG traces.

``results.csv`` has one row per improvement plus a final row per trial.
``summary.csv`` is computed from the rows as read back from ``results.csv``,
so recomputing it from that file reproduces it exactly. An instance is either
a fixed problem or a :class:`Layout`, which draws a fresh generated layout
per trial seed. Unsolved trials
count as infinite time and cost; infinity is written as ``inf``. The 95%
interval of the median initial-solution time is a percentile bootstrap.
"""
from __future__ import annotations

import csv
import json
import logging
import math
import time
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Union

import numpy as np

from tmitstar.harness.planio import save_plan
from tmitstar.harness.svg import render_svg
from tmitstar.harness.validate import validate_solution
from tmitstar.mmsampler import SamplerConfig
from tmitstar.rng import stream
from tmitstar.search.anytime import PlannerConfig, TMITStar
from tmitstar.world2d.generate import generate_instance
from tmitstar.world2d.problem import Problem, problem_from_dict

log = logging.getLogger(__name__)

RESULT_COLUMNS = ("instance", "seed", "t_seconds", "cost", "event", "outcome")
SUMMARY_COLUMNS = ("instance", "n_trials", "n_solved", "median_t_init", "ci_lo", "ci_hi", "median_final_cost")
BOOTSTRAP_RESAMPLES = 10_000
CURVE_POINTS = 50
BATCH_BUDGETS = {"clutter": 5, "shelf": 2}


@dataclass(frozen=True)
class Layout:
    """Generated instance family: the trial with seed ``s`` plans on layout ``s``."""
    kind: str
    n_objects: int

    def __call__(self, seed: int) -> dict:
        return generate_instance(self.kind, self.n_objects, seed)


InstanceData = Union[dict, Layout]


def layout_suite(kind: str, sizes) -> list[tuple[str, Layout]]:
    """Named layout families; shelf names count distractors (total objects minus the two targets)."""
    return [(f"{kind}_{n - 2 if kind == 'shelf' else n}", Layout(kind, n)) for n in sizes]


@dataclass
class BenchConfig:
    clock: str = "wall"
    batch_size: int = 50
    batch_budget: int | None = None  # None: per instance kind (clutter 5, shelf 2, otherwise 5)
    attempt_budget: int = 1
    mu: float | None = None
    workers: int = 1
    svg: bool = True
    save_plans: bool = True
    stop_on_first: bool = False  # end a trial at its first solution (success-rate sweeps)


@dataclass
class TrialRecord:
    instance: str
    seed: int
    budget: float
    improvements: list[tuple[float, float]]
    outcome: str  # "Solved" | "Timeout"
    t_end: float
    counters: dict = field(default_factory=dict)
    crashed: bool = False
    error: str = ""
    valid: bool | None = None  # None: nothing to validate
    validate_seconds: float = 0.0

    @property
    def initial_time(self) -> float:
        return self.improvements[0][0] if self.improvements else math.inf

    @property
    def final_cost(self) -> float:
        return self.improvements[-1][1] if self.improvements else math.inf


def default_batch_budget(problem: Problem) -> int:
    return BATCH_BUDGETS.get(problem.meta.get("kind", ""), 5)


def planner_config(problem: Problem, seed: int, cfg: BenchConfig) -> PlannerConfig:
    bb = cfg.batch_budget if cfg.batch_budget is not None else default_batch_budget(problem)
    sampler = SamplerConfig(batch_size=cfg.batch_size, batch_budget=bb,
                            attempt_budget=cfg.attempt_budget, mu=cfg.mu)
    return PlannerConfig(seed=seed, sampler=sampler, clock=cfg.clock, stop_on_first=cfg.stop_on_first)


def run_trial(name: str, data: InstanceData, seed: int, budget: float, cfg: BenchConfig,
              out_dir: str | None = None) -> TrialRecord:
    """One planner run; crashes are caught and recorded as a Timeout with ``crashed`` set."""
    try:
        if isinstance(data, Layout):
            data = data(seed)
        problem = problem_from_dict(data, name=name)
        result = TMITStar(problem, planner_config(problem, seed, cfg)).run(budget)
    except Exception as e:  # isolate the trial, keep the benchmark going
        log.error("trial %s seed %d crashed: %s", name, seed, e)
        return TrialRecord(name, seed, budget, [], "Timeout", budget, crashed=True,
                           error="".join(traceback.format_exception_only(type(e), e)).strip())
    rec = TrialRecord(name, seed, budget, [(i.t, i.cost) for i in result.improvements], result.outcome,
                      result.t_end, result.counters.as_dict())
    if result.improvements:
        t0 = time.perf_counter()
        rec.valid = all(validate_solution(i.path, problem).valid for i in result.improvements)
        rec.validate_seconds = time.perf_counter() - t0
    if out_dir is not None:
        out = Path(out_dir)
        best = result.best.path if result.best else None
        if cfg.svg:
            (out / "svg").mkdir(parents=True, exist_ok=True)
            (out / "svg" / f"{name}_s{seed}.svg").write_text(
                render_svg(problem, best, f"{name} seed {seed} {result.outcome}"))
        if cfg.save_plans and best is not None:
            (out / "plans").mkdir(parents=True, exist_ok=True)
            save_plan(best, problem, out / "plans" / f"{name}_s{seed}.json")
    return rec


def _trial_job(args) -> TrialRecord:
    return run_trial(*args)


def fmt(v: float) -> str:
    return "inf" if math.isinf(v) else f"{v:.6f}"


def _num(s: str) -> float:
    return math.inf if s == "inf" else float(s)


def result_rows(records: list[TrialRecord]) -> list[list[str]]:
    rows = []
    for r in records:
        for t, c in r.improvements:
            rows.append([r.instance, str(r.seed), fmt(t), fmt(c), "improvement", r.outcome])
        rows.append([r.instance, str(r.seed), fmt(r.t_end), fmt(r.final_cost), "final", r.outcome])
    return rows


def write_results(records: list[TrialRecord], path) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(RESULT_COLUMNS)
        w.writerows(result_rows(records))


def read_results(path) -> list[dict]:
    with open(path, newline="") as f:
        rows = list(csv.DictReader(f))
    for r in rows:
        r["seed"] = int(r["seed"])
        r["t_seconds"] = _num(r["t_seconds"])
        r["cost"] = _num(r["cost"])
    return rows


@dataclass
class TrialView:
    """A trial as reconstructed from results.csv rows."""

    improvements: list[tuple[float, float]]
    outcome: str
    t_end: float

    @property
    def t_init(self) -> float:
        return self.improvements[0][0] if self.improvements else math.inf

    @property
    def final_cost(self) -> float:
        return self.improvements[-1][1] if self.improvements else math.inf


def trials_from_rows(rows: list[dict]) -> dict[str, dict[int, TrialView]]:
    out: dict[str, dict[int, TrialView]] = {}
    for r in rows:
        trial = out.setdefault(r["instance"], {}).setdefault(r["seed"], TrialView([], "Timeout", math.inf))
        if r["event"] == "improvement":
            trial.improvements.append((r["t_seconds"], r["cost"]))
        else:
            trial.outcome = r["outcome"]
            trial.t_end = r["t_seconds"]
    return out


def bootstrap_median_ci(values, resamples: int = BOOTSTRAP_RESAMPLES, level: float = 0.95,
                        rng: np.random.Generator | None = None) -> tuple[float, float]:
    """Percentile bootstrap interval of the median; infinite values are allowed."""
    v = np.asarray(values, dtype=float)
    if len(v) == 0:
        return math.inf, math.inf
    rng = rng if rng is not None else stream(0, "bootstrap")
    idx = rng.integers(0, len(v), size=(resamples, len(v)))
    meds = np.sort(np.median(v[idx], axis=1))
    a = (1.0 - level) / 2
    lo = float(np.quantile(meds, a, method="inverted_cdf"))
    hi = float(np.quantile(meds, 1.0 - a, method="inverted_cdf"))
    return lo, hi


def summarize(rows: list[dict]) -> list[list[str]]:
    out = []
    for inst, trials in trials_from_rows(rows).items():
        t_init = [trials[s].t_init for s in sorted(trials)]
        final = [trials[s].final_cost for s in sorted(trials)]
        lo, hi = bootstrap_median_ci(t_init, rng=stream(0, f"bootstrap:{inst}"))
        out.append([inst, str(len(trials)), str(sum(t.outcome == "Solved" for t in trials.values())),
                    fmt(float(np.median(t_init))), fmt(lo), fmt(hi), fmt(float(np.median(final)))])
    return out


def curves(rows: list[dict], points: int = CURVE_POINTS) -> list[list[str]]:
    """Solved percentage and median best cost over a uniform time grid, per instance."""
    out = []
    for inst, trials in trials_from_rows(rows).items():
        horizon = max(t.t_end for t in trials.values())
        for k in range(points + 1):
            t = horizon * k / points
            best = []
            for tr in trials.values():
                done = [c for ti, c in tr.improvements if ti <= t]
                best.append(done[-1] if done else math.inf)
            solved = 100.0 * sum(math.isfinite(b) for b in best) / len(best)
            out.append([inst, fmt(t), f"{solved:.2f}", fmt(float(np.median(best)))])
    return out


def _write_csv(path, header, rows) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def run_benchmark(instances: list[tuple[str, InstanceData]], seeds, budget: float, out_dir,
                  cfg: BenchConfig | None = None) -> list[TrialRecord]:
    """Run every (instance, seed) pair and write results, summary, curves, trials and SVGs."""
    cfg = cfg or BenchConfig()
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    jobs = [(name, data, int(s), float(budget), cfg, str(out)) for name, data in instances for s in seeds]
    if cfg.workers > 1:
        with ProcessPoolExecutor(cfg.workers) as pool:
            records = list(pool.map(_trial_job, jobs))
    else:
        records = [_trial_job(j) for j in jobs]
    write_results(records, out / "results.csv")
    rows = read_results(out / "results.csv")
    _write_csv(out / "summary.csv", SUMMARY_COLUMNS, summarize(rows))
    _write_csv(out / "curves.csv", ("instance", "t_seconds", "solved_pct", "median_cost"), curves(rows))
    _write_csv(out / "trials.csv", ("instance", "seed", "outcome", "crashed", "valid", "counters"),
               [[r.instance, r.seed, r.outcome, int(r.crashed), "" if r.valid is None else int(r.valid),
                 json.dumps(r.counters, sort_keys=True)] for r in records])
    return records


def load_suite(suite_dir) -> list[tuple[str, dict]]:
    """Every ``*.json`` problem file of a directory, by file name."""
    files = sorted(Path(suite_dir).glob("*.json"))
    if not files:
        raise FileNotFoundError(f"no problem files in {suite_dir}")
    return [(f.stem, json.loads(f.read_text())) for f in files]


def record_dict(rec: TrialRecord) -> dict:
    return asdict(rec)
