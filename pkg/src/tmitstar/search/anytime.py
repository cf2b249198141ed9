"""The anytime planning loop: task plans, batch sampling, reverse and forward search.

One iteration samples (part of) a batch, updates the reverse heuristic,
and runs the forward search against the incumbent. At batch boundaries the
sampler's events may raise the attempt budget and request a new candidate
task plan, blocking the failing prefix of the current one. Older plans stay
active, so their actions remain viable in the modes they were planned for.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

from tmitstar.counters import Counters, make_clock
from tmitstar.hybridspace import RADIUS_TUNING, SearchGraph
from tmitstar.mmsampler import MultimodalSampler, SamplerConfig, replan_trigger
from tmitstar.rng import Streams
from tmitstar.search.forward import EdgeValidator, Segment, SolutionPath, forward_search
from tmitstar.search.reverse import ReverseSearch
from tmitstar.taskplan import DEFAULT_MAX_HORIZON, SymbolicDomain, TaskPlanner
from tmitstar.world2d.problem import Problem


@dataclass
class PlannerConfig:
    seed: int = 0
    sampler: SamplerConfig = field(default_factory=SamplerConfig)
    max_horizon: int = DEFAULT_MAX_HORIZON
    eta: float = RADIUS_TUNING
    clock: str = "wall"  # "wall" or the deterministic "work" clock
    stop_on_first: bool = False
    max_batches: int | None = None


@dataclass
class Improvement:
    t: float
    cost: float
    path: SolutionPath


@dataclass
class RunResult:
    improvements: list[Improvement]
    outcome: str  # "Solved" | "Timeout"
    t_end: float
    counters: Counters
    trace: list[dict] = field(default_factory=list)
    plans: list = field(default_factory=list)
    prefix_blocks: list[tuple[int, int]] = field(default_factory=list)

    @property
    def best(self) -> Improvement | None:
        return self.improvements[-1] if self.improvements else None

    @property
    def initial_time(self) -> float:
        return self.improvements[0].t if self.improvements else math.inf

    @property
    def final_cost(self) -> float:
        return self.improvements[-1].cost if self.improvements else math.inf


class TMITStar:
    """Planner state for one run; :meth:`run` drives the loop until the budget expires."""

    def __init__(self, problem: Problem, cfg: PlannerConfig | None = None):
        self.problem = problem
        self.cfg = cfg or PlannerConfig()
        cfg = self.cfg
        self.counters = Counters()
        self.clock = make_clock(cfg.clock, self.counters)
        self.streams = Streams(cfg.seed)
        scene = problem.scene
        self.graph = SearchGraph(len(scene.start), scene.config_measure, cfg.eta, is_goal=problem.is_goal)
        self.start = self.graph.add_state(problem.initial_state)
        self.graph.commit()
        self.sampler = MultimodalSampler(problem, self.graph, self.streams["sampler"],
                                         replace(cfg.sampler), self.counters)
        self.task_planner = TaskPlanner(SymbolicDomain.from_problem(problem), cfg.max_horizon)
        self.reverse = ReverseSearch(self.graph, self.counters)
        self.validator = EdgeValidator(self.graph, scene, self.counters)
        self.actions = {a.id: a for a in problem.actions}
        self.incumbent = math.inf
        self.improvements: list[Improvement] = []
        self.trace: list[dict] = []
        self.batches_on_plan = 0
        self.batch_index = 0
        self.events_log: list[tuple[int, frozenset]] = []
        self.deadline = math.inf

    def _expired(self) -> bool:
        return self.clock.now() >= self.deadline

    def _new_plan(self) -> None:
        plan = self.task_planner.next_plan()
        if plan is not None:
            self.counters.plans_generated += 1
            self.sampler.add_plan(plan)
        self.batches_on_plan = 0

    def _record(self, path: SolutionPath) -> None:
        if path.cost < self.incumbent:
            self.incumbent = path.cost
            self.improvements.append(Improvement(self.clock.now(), path.cost, path))

    def step(self) -> bool:
        """One sampler call plus search; returns True when a batch was completed."""
        res = self.sampler.sample_batch(self._expired)
        self.graph.commit(update_radius=res.complete)
        self.reverse.update()
        fwd = forward_search(self.graph, self.reverse, self.start, self.incumbent, self.validator,
                             self.actions, self.counters, self._expired)
        if fwd.path is not None:
            self._record(fwd.path)
        if res.complete:
            self.batch_index += 1
            self.batches_on_plan += 1
            self.events_log.append((self.batch_index, frozenset(e.value for e in res.events)))
            decision = replan_trigger(res.events, self.batches_on_plan, self.sampler.cfg.batch_budget,
                                      res.failed_step)
            if decision.increase_budget:
                self.sampler.increase_budget()
            if decision.replan and self.sampler.plans:
                latest = self.sampler.plans[-1]
                if decision.prefix is None:
                    self.counters.full_blocks += 1
                else:
                    self.counters.prefix_blocks += 1
                self.task_planner.block(latest, decision.prefix)
                self._new_plan()
            self.trace.append({
                "batch": self.batch_index, "t": round(self.clock.now(), 6),
                "vertices": self.graph.n_vertices, "modes": len(self.graph.modes),
                "transitions": len(self.graph.transition_list), "plans": len(self.sampler.plans),
                "attempt_budget": self.sampler.cfg.attempt_budget,
                "events": sorted(e.value for e in res.events),
                "cost": self.incumbent,
            })
        return res.complete

    def run(self, time_budget: float) -> RunResult:
        if self.problem.is_goal(self.problem.initial_state):
            path = SolutionPath([Segment([self.problem.initial_state])], 0.0, [self.start])
            self._record(path)
            return self._result("Solved")
        self._new_plan()
        self.deadline = time_budget
        while self.clock.now() < time_budget:
            complete = self.step()
            if self.cfg.stop_on_first and self.improvements:
                break
            if complete and self.cfg.max_batches is not None and self.batch_index >= self.cfg.max_batches:
                break
        return self._result("Solved" if self.improvements else "Timeout")

    def _result(self, outcome: str) -> RunResult:
        return RunResult(list(self.improvements), outcome, self.clock.now(), self.counters, self.trace,
                         list(self.sampler.plans), list(self.task_planner.prefix_blocks))


def anytime_loop(problem: Problem, time_budget: float, cfg: PlannerConfig | None = None):
    """Yield ``(t, cost, path)`` for every strict improvement found within the budget."""
    result = TMITStar(problem, cfg).run(time_budget)
    for imp in result.improvements:
        yield imp.t, imp.cost, imp.path
