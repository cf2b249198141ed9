"""Incremental SAT-based makespan-optimal planning over the discrete relaxation.

Only discrete symbols enter the encoding: geometric preconditions and
continuous effects are dropped, so every plan is a candidate whose
geometric feasibility the motion layer has to establish. Steps are added one
at a time; the goal is attached to the current horizon through an assumption
literal, so extending the horizon never touches existing clauses. Blocking
clauses (full plans or failing prefixes) are permanent.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Sequence

from tmitstar.predicates import And, Atom, Formula, Not, Or, literal_conjunction
from tmitstar.sat import SatSolver

DEFAULT_MAX_HORIZON = 20
PAIRWISE_MUTEX_LIMIT = 30


@dataclass(frozen=True)
class SymbolicAction:
    id: int
    name: str
    pre: Formula
    add: frozenset[int]
    delete: frozenset[int]

    def applicable(self, xi: Sequence[bool]) -> bool:
        return self.pre.evaluate(xi)

    def apply(self, xi: Sequence[bool]) -> tuple[bool, ...]:
        out = list(xi)
        for i in self.delete:
            out[i] = False
        for i in self.add:
            out[i] = True
        return tuple(out)


@dataclass(frozen=True)
class SymbolicDomain:
    """The discrete relaxation: symbols, actions, initial state and goal."""

    symbols: tuple[str, ...]
    actions: tuple[SymbolicAction, ...]
    initial: tuple[bool, ...]
    goal: Formula

    @property
    def n_symbols(self) -> int:
        return len(self.symbols)

    @classmethod
    def from_problem(cls, problem) -> SymbolicDomain:
        acts = tuple(SymbolicAction(a.id, a.name, a.precondition.discrete_part, a.add, a.delete)
                     for a in problem.actions)
        return cls(tuple(problem.symbols), acts, tuple(problem.initial_discrete),
                   problem.goal.discrete_part)


@dataclass
class SymbolicPlan:
    """A candidate plan; ``steps`` holds raw per-step action ids (``None`` = null action)."""

    steps: list[int | None]
    per_step_discrete: list[tuple[bool, ...]]
    candidate_index: int
    actions: list[SymbolicAction] = field(default_factory=list)

    @property
    def horizon(self) -> int:
        return len(self.steps)

    @property
    def action_ids(self) -> list[int]:
        return [a for a in self.steps if a is not None]

    def __len__(self) -> int:
        return len(self.actions)

    def names(self) -> list[str]:
        return [a.name for a in self.actions]

    def uses(self) -> list[tuple[tuple[bool, ...], int, int]]:
        """``(family before the step, action id, step)`` for every non-null step (1-based)."""
        return [(self.per_step_discrete[j - 1], a, j) for j, a in enumerate(self.steps, 1) if a is not None]


class Unsatisfiable(Exception):
    """No unblocked plan exists up to the horizon cap."""

    def __init__(self, horizon: int):
        super().__init__(f"no plan within horizon {horizon}")
        self.horizon = horizon


class PlanValidationError(ValueError):
    def __init__(self, step: int, message: str):
        super().__init__(f"step {step}: {message}")
        self.step = step


def simulate_discrete(plan: SymbolicPlan | Sequence[SymbolicAction], initial: Sequence[bool]) -> tuple[bool, ...]:
    """Apply discrete effects in order, checking each discrete precondition."""
    acts = plan.actions if isinstance(plan, SymbolicPlan) else plan
    xi = tuple(initial)
    for j, a in enumerate(acts, 1):
        if not a.applicable(xi):
            raise PlanValidationError(j, f"precondition of {a.name} is false")
        xi = a.apply(xi)
    return xi


class PlanningEncoding:
    """Per-step symbol/action variables over an incremental solver."""

    def __init__(self, domain: SymbolicDomain, solver: SatSolver | None = None):
        self.domain = domain
        self.solver = solver or SatSolver()
        self.null_index = len(domain.actions)
        self.steps = 0
        self.symbol_vars: list[list[int]] = []
        self.action_vars: list[list[int]] = [[]]  # index 0 unused
        self.goal_vars: dict[int, int] = {}
        self.blocked: list[tuple[str, list[int | None]]] = []
        self.clauses_per_step: list[int] = []
        self.clause_count = 0
        self.candidates = 0
        self._true: int | None = None
        self._adders = [[a.id for a in domain.actions if s in a.add] for s in range(domain.n_symbols)]
        self._deleters = [[a.id for a in domain.actions if s in a.delete and s not in a.add]
                          for s in range(domain.n_symbols)]
        self._init_step0()

    # -- clause helpers -----------------------------------------------------------------
    def _clause(self, lits) -> None:
        self.clause_count += 1
        self.solver.add_clause(lits)

    def _true_lit(self) -> int:
        if self._true is None:
            self._true = self.solver.new_var()
            self._clause([self._true])
        return self._true

    def _encode(self, f: Formula, syms: Sequence[int]) -> int:
        """Tseitin literal equivalent to ``f`` over the given symbol variables."""
        if isinstance(f, Atom):
            return syms[f.index]
        if isinstance(f, Not):
            return -self._encode(f.item, syms)
        if isinstance(f, (And, Or)):
            if not f.items:
                t = self._true_lit()
                return t if isinstance(f, And) else -t
            lits = [self._encode(i, syms) for i in f.items]
            if len(lits) == 1:
                return lits[0]
            t = self.solver.new_var()
            if isinstance(f, And):
                for l in lits:
                    self._clause([-t, l])
                self._clause([t] + [-l for l in lits])
            else:
                self._clause([-t] + lits)
                for l in lits:
                    self._clause([t, -l])
            return t
        raise TypeError(f"not a formula: {f!r}")

    def _require(self, guard: int, f: Formula, syms: Sequence[int]) -> None:
        """Clauses for ``guard -> f``; direct when ``f`` is a conjunction of literals."""
        lits = literal_conjunction(f)
        if lits is not None:
            for idx, pos in lits:
                self._clause([-guard, syms[idx] if pos else -syms[idx]])
        else:
            self._clause([-guard, self._encode(f, syms)])

    def _at_most_one(self, lits: list[int]) -> None:
        if len(lits) <= PAIRWISE_MUTEX_LIMIT:
            for a, b in itertools.combinations(lits, 2):
                self._clause([-a, -b])
            return
        # sequential counter
        s = [self.solver.new_var() for _ in range(len(lits) - 1)]
        self._clause([-lits[0], s[0]])
        for i in range(1, len(lits) - 1):
            self._clause([-lits[i], s[i]])
            self._clause([-s[i - 1], s[i]])
            self._clause([-lits[i], -s[i - 1]])
        self._clause([-lits[-1], -s[-1]])

    # -- steps ---------------------------------------------------------------------------
    def _init_step0(self) -> None:
        before = self.clause_count
        syms = [self.solver.new_var() for _ in range(self.domain.n_symbols)]
        self.symbol_vars.append(syms)
        for v, val in zip(syms, self.domain.initial):
            self._clause([v if val else -v])
        self._add_goal(0)
        self.clauses_per_step.append(self.clause_count - before)

    def _add_goal(self, n: int) -> None:
        g = self.solver.new_var()
        self.goal_vars[n] = g
        self._require(g, self.domain.goal, self.symbol_vars[n])

    def add_step(self) -> None:
        before = self.clause_count
        j = self.steps + 1
        prev = self.symbol_vars[j - 1]
        syms = [self.solver.new_var() for _ in range(self.domain.n_symbols)]
        acts = [self.solver.new_var() for _ in range(len(self.domain.actions) + 1)]
        self.symbol_vars.append(syms)
        self.action_vars.append(acts)
        self._clause(list(acts))
        self._at_most_one(acts)
        for a in self.domain.actions:
            b = acts[a.id]
            self._require(b, a.pre, prev)
            for s in a.add:
                self._clause([-b, syms[s]])
            for s in a.delete - a.add:
                self._clause([-b, -syms[s]])
        for s in range(self.domain.n_symbols):
            # explanatory frame axioms
            self._clause([-prev[s], syms[s]] + [acts[i] for i in self._deleters[s]])
            self._clause([prev[s], -syms[s]] + [acts[i] for i in self._adders[s]])
        if j > 1:
            # the null action only pads the end of a plan
            self._clause([-self.action_vars[j - 1][self.null_index], acts[self.null_index]])
        self.steps = j
        self._add_goal(j)
        self.clauses_per_step.append(self.clause_count - before)

    # -- solving and blocking ------------------------------------------------------------------
    def solve_at_current(self) -> SymbolicPlan | None:
        if not self.solver.solve([self.goal_vars[self.steps]]):
            return None
        return self._extract()

    def _extract(self) -> SymbolicPlan:
        s = self.solver
        steps: list[int | None] = []
        for j in range(1, self.steps + 1):
            chosen = [i for i, v in enumerate(self.action_vars[j]) if s.model_value(v)]
            assert len(chosen) == 1, "mutex violated"
            steps.append(None if chosen[0] == self.null_index else chosen[0])
        per_step = [tuple(s.model_value(v) for v in self.symbol_vars[j]) for j in range(self.steps + 1)]
        acts = [self.domain.actions[a] for a in steps if a is not None]
        plan = SymbolicPlan(steps, per_step, self.candidates, acts)
        self.candidates += 1
        return plan

    def _block(self, plan: SymbolicPlan, upto: int, kind: str) -> None:
        lits = []
        for j in range(1, upto + 1):
            a = plan.steps[j - 1]
            lits.append(-self.action_vars[j][self.null_index if a is None else a])
        self.blocked.append((kind, list(plan.steps[:upto])))
        self._clause(lits)

    def block_full_plan(self, plan: SymbolicPlan) -> None:
        self._block(plan, plan.horizon, "full")

    def block_prefix(self, plan: SymbolicPlan, failed_step: int) -> None:
        if not 1 <= failed_step <= plan.horizon:
            raise ValueError(f"failed_step must be in 1..{plan.horizon}")
        self._block(plan, failed_step, "prefix")


def solve_next_plan(encoding: PlanningEncoding, max_horizon: int = DEFAULT_MAX_HORIZON) -> SymbolicPlan:
    """Shortest plan at or above the current horizon that no blocking clause excludes."""
    while True:
        plan = encoding.solve_at_current()
        if plan is not None:
            return plan
        if encoding.steps >= max_horizon or not encoding.solver.ok:
            raise Unsatisfiable(encoding.steps)
        encoding.add_step()


def block_full_plan(encoding: PlanningEncoding, plan: SymbolicPlan) -> None:
    encoding.block_full_plan(plan)


def block_prefix(encoding: PlanningEncoding, plan: SymbolicPlan, failed_step: int) -> None:
    encoding.block_prefix(plan, failed_step)


class TaskPlanner:
    """Thin stateful wrapper: candidate generation with blocking, plus bookkeeping."""

    def __init__(self, domain: SymbolicDomain, max_horizon: int = DEFAULT_MAX_HORIZON):
        self.domain = domain
        self.encoding = PlanningEncoding(domain)
        self.max_horizon = max_horizon
        self.plans: list[SymbolicPlan] = []
        self.exhausted = False
        self.prefix_blocks: list[tuple[int, int]] = []  # (candidate index, failed step)

    def next_plan(self) -> SymbolicPlan | None:
        if self.exhausted:
            return None
        try:
            plan = solve_next_plan(self.encoding, self.max_horizon)
        except Unsatisfiable:
            self.exhausted = True
            return None
        self.plans.append(plan)
        return plan

    def block(self, plan: SymbolicPlan, failed_step: int | None) -> None:
        if failed_step is None or failed_step >= plan.horizon:
            self.encoding.block_full_plan(plan)
        else:
            self.encoding.block_prefix(plan, failed_step)
            self.prefix_blocks.append((plan.candidate_index, failed_step))
