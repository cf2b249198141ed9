"""Multimodal batch sampling over the reachable modes.

Each batch pops every reachable mode from a LIFO queue (newly reached modes
are pushed and therefore explored first), draws a fixed quota of uniform
valid samples in it, and projects a sample onto an action's precondition
manifold only when the sample is within ``mu`` of it. Successful
projections add a transition to the graph and possibly a new mode. A
batch may be split over several calls: the call returns as soon as a
goal-satisfying state appears, and the next call resumes where it stopped.
"""
from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from tmitstar.counters import Counters
from tmitstar.hybridspace import SearchGraph
from tmitstar.predicates import (FailureReason, PreconditionFormula, ProjectionFailed,
                                 geometric_distance, project_to_manifold)
from tmitstar.taskplan import SymbolicPlan
from tmitstar.world2d.problem import GroundAction, Problem
from tmitstar.world2d.scene import is_valid

log = logging.getLogger(__name__)

GOAL_TARGET = -2  # pseudo action id for projections onto the goal manifold


@dataclass
class SamplerConfig:
    batch_size: int = 50
    batch_budget: int = 5
    attempt_budget: int = 1
    mu: float | None = None  # None: use the mode's connection radius
    rejection_cap: int = 1000
    chunk: int = 64

    def __post_init__(self):
        if self.batch_size <= 0 or self.batch_budget <= 0 or self.attempt_budget <= 0:
            raise ValueError("batch size and budgets must be positive")
        if self.mu is not None and self.mu <= 0:
            raise ValueError("mu must be positive")


class Event(enum.Enum):
    GOAL_REACHED = "GoalReached"
    NO_VIABLE_ACTIONS = "NoViableActions"
    GOAL_MODE_NOT_REACHED = "GoalModeNotReached"


class ModeQueue:
    """LIFO mode queue that records every push and pop."""

    def __init__(self):
        self._stack: list[int] = []
        self.log: list[tuple[str, int]] = []
        self.persistent = True

    def push(self, mid: int) -> None:
        self._stack.append(mid)
        self.log.append(("push", mid))

    def pop(self) -> int:
        mid = self._stack.pop()
        self.log.append(("pop", mid))
        return mid

    def __len__(self) -> int:
        return len(self._stack)

    def __contains__(self, mid: int) -> bool:
        return mid in self._stack


@dataclass
class BatchResult:
    vertices: list[int]
    complete: bool
    events: set[Event] = field(default_factory=set)
    failed_step: int | None = None


@dataclass(frozen=True)
class ReplanDecision:
    replan: bool
    prefix: int | None = None
    increase_budget: bool = False


def replan_trigger(events: set[Event], batches_on_plan: int = 10**9, batch_budget: int = 1,
                   failed_step: int | None = None) -> ReplanDecision:
    """Map the events of a completed batch to budget and replanning requests.

    Running out of viable actions always raises the budget. A new task plan is
    requested when the goal mode is still unreached after the current plan
    has had ``batch_budget`` batches; the first failing step of that plan
    accompanies the request (None means the whole plan is blocked).
    """
    increase = Event.NO_VIABLE_ACTIONS in events
    if Event.GOAL_REACHED in events:
        return ReplanDecision(False, None, increase)
    if batches_on_plan >= batch_budget:
        return ReplanDecision(True, failed_step, increase)
    return ReplanDecision(False, None, increase)


class MultimodalSampler:
    def __init__(self, problem: Problem, graph: SearchGraph, rng: np.random.Generator,
                 cfg: SamplerConfig | None = None, counters: Counters | None = None):
        self.problem = problem
        self.graph = graph
        self.rng = rng
        self.cfg = cfg or SamplerConfig()
        self.counters = counters or Counters()
        self.plans: list[SymbolicPlan] = []
        self._family_actions: dict[tuple[bool, ...], list[int]] = {}  # in plan order, deduplicated
        self.attempts_used: dict[int, int] = {}
        self.queue = ModeQueue()
        self._current: list | None = None  # [mode id, remaining quota]
        self._buffers: dict[int, list[tuple[float, float]]] = {}
        self._early_returned = False
        self._in_batch = False
        self.batch_vertices: list[int] = []
        self.gated_log: list[tuple[int, int]] = []  # (vertex, action id) for every projection
        self.failure_log: list[tuple[int, FailureReason]] = []
        self.scene = problem.scene
        self._actions = {a.id: a for a in problem.actions}
        lo = self.scene.bounds.shrink(self.scene.robot_radius)
        self._box = (np.array(lo[:2]), np.array(lo[2:]))

    # -- plans and viability ----------------------------------------------------------------
    def add_plan(self, plan: SymbolicPlan) -> None:
        self.plans.append(plan)
        for xi, aid, _ in plan.uses():
            used = self._family_actions.setdefault(xi, [])
            if aid not in used:
                used.append(aid)

    @property
    def attempt_budget(self) -> int:
        return self.cfg.attempt_budget

    def attempts_remaining(self, aid: int) -> int:
        return self.cfg.attempt_budget - self.attempts_used.get(aid, 0)

    def viable_actions(self, mid: int) -> list[int]:
        """Actions used at this mode's family by any candidate plan with attempts left."""
        mode = self.graph.modes[mid]
        budget, used = self.cfg.attempt_budget, self.attempts_used
        out = [a for a in self._family_actions.get(mode.family.xi, ()) if budget - used.get(a, 0) > 0]
        mode.viable_actions = [(a, budget - used.get(a, 0)) for a in out]
        return out

    def no_actions(self) -> bool:
        return all(not self.viable_actions(m) for m in range(len(self.graph.modes)))

    def increase_budget(self) -> None:
        if not self.no_actions():
            raise RuntimeError("budget increase requested while some action is still viable")
        self.cfg.attempt_budget += 1
        self.counters.budget_increases += 1
        for m in range(len(self.graph.modes)):
            self.viable_actions(m)

    # -- sampling -------------------------------------------------------------------------
    def mu(self, mid: int) -> float:
        return self.cfg.mu if self.cfg.mu is not None else self.graph.connection_radius(mid)

    def sample_valid(self, mid: int) -> tuple[float, float] | None:
        """One uniform collision-free robot configuration in mode ``mid`` (None if the cap is hit)."""
        buf = self._buffers.setdefault(mid, [])
        mode = self.graph.modes[mid]
        geo = self.scene.geometry(mode.ungrasped_poses, mode.attached, mode.grasp_offset)
        rejections = 0
        while not buf:
            lo, hi = self._box
            pts = lo + (hi - lo) * self.rng.random((self.cfg.chunk, 2))
            ok = geo.valid(pts)
            self.counters.collision_points += len(pts)
            good = np.nonzero(ok)[0]
            if len(good) == 0:
                rejections += len(pts)
                self.counters.sample_rejections += len(pts)
                if rejections > self.cfg.rejection_cap:
                    return None
                continue
            # rejections before the first accepted candidate count against the cap
            rejections += int(good[0])
            self.counters.sample_rejections += int(len(pts) - len(good))
            if rejections > self.cfg.rejection_cap:
                return None
            buf.extend((float(p[0]), float(p[1])) for p in pts[good])
        return buf.pop(0)

    def start_batch(self) -> None:
        """Queue every reachable mode (creation order, so the newest is popped first)."""
        if self._in_batch:
            raise RuntimeError("previous batch not finished")
        for mid in range(len(self.graph.modes)):
            self.queue.push(mid)
        self._in_batch = True
        self._early_returned = False
        self.batch_vertices = []
        self.counters.batches += 1

    @property
    def in_batch(self) -> bool:
        return self._in_batch

    def sample_batch(self, should_stop=None) -> BatchResult:
        """Run (or resume) the current batch until it completes or reaches a goal state.

        ``should_stop`` is polled before every sample; when it fires the call
        returns an incomplete result without events.
        """
        if not self._in_batch:
            self.start_batch()
        self.counters.sampler_calls += 1
        new: list[int] = []
        while self._current is not None or len(self.queue):
            if self._current is None:
                self._current = [self.queue.pop(), self.cfg.batch_size]
            mid = self._current[0]
            while self._current[1] > 0:
                if should_stop is not None and should_stop():
                    self.batch_vertices.extend(new)
                    return BatchResult(new, False)
                cfg_sample = self.sample_valid(mid)
                if cfg_sample is None:
                    log.warning("mode %d: rejection cap hit, quota aborted for this batch", mid)
                    self._current[1] = 0
                    break
                self._current[1] -= 1
                self.counters.samples += 1
                vid = self.graph.add_vertex(mid, cfg_sample)
                new.append(vid)
                if self.graph.goal[vid] and not self._early_returned:
                    self._early_returned = True
                    return self._partial(new)
                goal_found = self._project_all(mid, vid, new)
                if goal_found and not self._early_returned:
                    self._early_returned = True
                    return self._partial(new)
            self._current = None
        return self._finish(new)

    def _partial(self, new: list[int]) -> BatchResult:
        self.batch_vertices.extend(new)
        return BatchResult(new, False, {Event.GOAL_REACHED})

    def _project_all(self, mid: int, vid: int, new: list[int]) -> bool:
        q = self.graph.state(vid)
        found_goal = False
        mu = self.mu(mid)
        targets: list[tuple[int, PreconditionFormula, GroundAction | None]] = [
            (aid, self._actions[aid].precondition, self._actions[aid]) for aid in self.viable_actions(mid)]
        goal = self.problem.goal
        if goal.geometric_part and goal.discrete_holds(q.discrete):
            targets.append((GOAL_TARGET, goal, None))
        for aid, formula, action in targets:
            if action is not None and self.attempts_remaining(aid) <= 0:
                continue
            if not (geometric_distance(formula, q) < mu):
                continue
            self.counters.gated_calls += 1
            self.gated_log.append((vid, aid))
            if action is not None:
                self.attempts_used[aid] = self.attempts_used.get(aid, 0) + 1
            self.counters.projections_attempted += 1
            stats: dict = {}
            try:
                q2 = project_to_manifold(formula, q, is_valid=lambda s: is_valid(s, self.scene),
                                         stats=stats)
                if action is not None:
                    target = action.apply(q2)
                    if not is_valid(target, self.scene):
                        raise ProjectionFailed(FailureReason.INVALID_STATE, target)
            except ProjectionFailed as e:
                self.counters.projection_iterations += stats.get("iterations", 0)
                self.counters.projection_failures += 1
                self.failure_log.append((aid, e.reason))
                continue
            self.counters.projection_iterations += stats.get("iterations", 0)
            self.counters.projections_succeeded += 1
            v2 = self.graph.add_vertex(mid, q2.robot_config)
            new.append(v2)
            if action is None:
                found_goal = found_goal or self.graph.goal[v2]
                continue
            n_before = len(self.graph.modes)
            target_mode = self.graph.mark_reachable(v2, action)
            self.counters.transitions += 1
            to_vid = self.graph.transition_target(v2, action.id)
            new.append(to_vid)
            if len(self.graph.modes) > n_before:
                self.queue.push(target_mode)
            if self.graph.goal[to_vid]:
                found_goal = True
        return found_goal

    def _finish(self, new: list[int]) -> BatchResult:
        self._in_batch = False
        self.batch_vertices.extend(new)
        events: set[Event] = set()
        if any(self.graph.goal):
            events.add(Event.GOAL_REACHED)
        else:
            events.add(Event.GOAL_MODE_NOT_REACHED)
        if self.no_actions():
            events.add(Event.NO_VIABLE_ACTIONS)
        failed = self.failing_step(self.plans[-1]) if self.plans else None
        return BatchResult(new, True, events, failed)

    # -- plan progress ---------------------------------------------------------------------
    def failing_step(self, plan: SymbolicPlan) -> int | None:
        """First step of ``plan`` whose action never produced a transition out of its family."""
        done = {(self.graph.modes[self.graph.vertex_mode[f]].family.xi, a)
                for f, a, _ in self.graph.transitions}
        for xi, aid, j in plan.uses():
            if (xi, aid) not in done:
                return j
        return None
