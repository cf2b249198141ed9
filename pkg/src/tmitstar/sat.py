"""A small incremental CDCL SAT solver.

Two-watched-literal propagation, first-UIP clause learning, VSIDS branching
with phase saving, Luby restarts and solving under assumptions. Clauses can
be added between calls; the solver always returns to decision level 0, so
everything learnt stays valid (learnt clauses are implied by the permanent
clauses alone, never by the assumptions).

Literals are nonzero ints in DIMACS style: ``v`` or ``-v`` for variable ``v >= 1``.
"""
from __future__ import annotations

import heapq
from dataclasses import dataclass


@dataclass
class SolverStats:
    decisions: int = 0
    propagations: int = 0
    conflicts: int = 0
    restarts: int = 0
    learnt: int = 0
    solves: int = 0


def luby(i: int) -> int:
    """The ``i``-th element (1-based) of the Luby sequence 1,1,2,1,1,2,4,..."""
    k = 1
    while (1 << k) - 1 < i:
        k += 1
    while True:
        if i == (1 << k) - 1:
            return 1 << (k - 1)
        i -= (1 << (k - 1)) - 1
        k = 1
        while (1 << k) - 1 < i:
            k += 1


def _code(lit: int) -> int:
    return 2 * lit if lit > 0 else -2 * lit + 1


class SatSolver:
    RESTART_BASE = 64
    DECAY = 1 / 0.95

    def __init__(self):
        self.n_vars = 0
        self.clauses: list[list[int]] = []
        self.watches: list[list[int]] = [[], []]
        self.value: list[int] = [0]
        self.level: list[int] = [0]
        self.reason: list[int] = [-1]
        self.activity: list[float] = [0.0]
        self.phase: list[bool] = [False]
        self.trail: list[int] = []
        self.trail_lim: list[int] = []
        self.qhead = 0
        self.ok = True
        self.heap: list[tuple[float, int]] = []
        self.var_inc = 1.0
        self.model: list[int] | None = None
        self.stats = SolverStats()
        self.n_original = 0

    # -- construction -------------------------------------------------------------
    def new_var(self) -> int:
        self.n_vars += 1
        v = self.n_vars
        self.value.append(0)
        self.level.append(0)
        self.reason.append(-1)
        self.activity.append(0.0)
        self.phase.append(False)
        self.watches.append([])
        self.watches.append([])
        heapq.heappush(self.heap, (0.0, v))
        return v

    def add_clause(self, lits) -> bool:
        """Add a permanent clause; returns False once the formula is unsatisfiable."""
        if not self.ok:
            return False
        self._backtrack(0)
        self.n_original += 1
        seen: set[int] = set()
        out = []
        for lit in lits:
            if lit == 0 or abs(lit) > self.n_vars:
                raise ValueError(f"invalid literal {lit}")
            if -lit in seen:
                return True  # tautology
            if lit in seen:
                continue
            val = self._val(lit)
            if val == 1:
                return True  # satisfied at level 0
            if val == -1:
                continue
            seen.add(lit)
            out.append(lit)
        if not out:
            self.ok = False
            return False
        if len(out) == 1:
            self._enqueue(out[0], -1)
            if self._propagate() != -1:
                self.ok = False
            return self.ok
        self._attach(out)
        return True

    def _attach(self, lits: list[int]) -> int:
        ci = len(self.clauses)
        self.clauses.append(lits)
        self.watches[_code(lits[0])].append(ci)
        self.watches[_code(lits[1])].append(ci)
        return ci

    # -- assignment -------------------------------------------------------------------
    def _val(self, lit: int) -> int:
        v = self.value[lit if lit > 0 else -lit]
        return v if lit > 0 else -v

    def _enqueue(self, lit: int, reason: int) -> None:
        v = lit if lit > 0 else -lit
        self.value[v] = 1 if lit > 0 else -1
        self.level[v] = len(self.trail_lim)
        self.reason[v] = reason
        self.trail.append(lit)

    def _backtrack(self, lvl: int) -> None:
        if len(self.trail_lim) <= lvl:
            return
        start = self.trail_lim[lvl]
        for lit in self.trail[start:]:
            v = lit if lit > 0 else -lit
            self.phase[v] = lit > 0
            self.value[v] = 0
            self.reason[v] = -1
            heapq.heappush(self.heap, (-self.activity[v], v))
        del self.trail[start:]
        del self.trail_lim[lvl:]
        self.qhead = min(self.qhead, start)

    def _propagate(self) -> int:
        value, clauses, watches = self.value, self.clauses, self.watches
        while self.qhead < len(self.trail):
            p = self.trail[self.qhead]
            self.qhead += 1
            self.stats.propagations += 1
            false_lit = -p
            fc = _code(false_lit)
            ws = watches[fc]
            keep: list[int] = []
            n = len(ws)
            i = 0
            while i < n:
                ci = ws[i]
                i += 1
                c = clauses[ci]
                if c[0] == false_lit:
                    c[0], c[1] = c[1], c[0]
                first = c[0]
                fv = value[first] if first > 0 else -value[-first]
                if fv == 1:
                    keep.append(ci)
                    continue
                moved = False
                for k in range(2, len(c)):
                    lk = c[k]
                    if (value[lk] if lk > 0 else -value[-lk]) != -1:
                        c[1], c[k] = lk, c[1]
                        watches[_code(lk)].append(ci)
                        moved = True
                        break
                if moved:
                    continue
                keep.append(ci)
                if fv == -1:
                    keep.extend(ws[i:])
                    watches[fc] = keep
                    self.qhead = len(self.trail)
                    return ci
                self._enqueue(first, ci)
            watches[fc] = keep
        return -1

    # -- learning -----------------------------------------------------------------------
    def _bump(self, v: int) -> None:
        self.activity[v] += self.var_inc
        if self.activity[v] > 1e100:
            for u in range(1, self.n_vars + 1):
                self.activity[u] *= 1e-100
            self.var_inc *= 1e-100
            self.heap = [(-self.activity[u], u) for u in range(1, self.n_vars + 1) if self.value[u] == 0]
            heapq.heapify(self.heap)
        elif self.value[v] == 0:
            heapq.heappush(self.heap, (-self.activity[v], v))

    def _analyze(self, confl: int) -> tuple[list[int], int]:
        seen = [False] * (self.n_vars + 1)
        learnt = [0]
        path = 0
        p = 0
        idx = len(self.trail) - 1
        cur = len(self.trail_lim)
        clause = self.clauses[confl]
        while True:
            for q in (clause if p == 0 else clause[1:]):
                v = q if q > 0 else -q
                if not seen[v] and self.level[v] > 0:
                    seen[v] = True
                    self._bump(v)
                    if self.level[v] >= cur:
                        path += 1
                    else:
                        learnt.append(q)
            while not seen[abs(self.trail[idx])]:
                idx -= 1
            p = self.trail[idx]
            idx -= 1
            vp = abs(p)
            seen[vp] = False
            path -= 1
            if path == 0:
                break
            clause = self.clauses[self.reason[vp]]
        learnt[0] = -p
        if len(learnt) == 1:
            return learnt, 0
        best = max(range(1, len(learnt)), key=lambda i: self.level[abs(learnt[i])])
        learnt[1], learnt[best] = learnt[best], learnt[1]
        return learnt, self.level[abs(learnt[1])]

    def _pick_branch(self) -> int:
        while self.heap:
            _, v = heapq.heappop(self.heap)
            if self.value[v] == 0:
                return v
        return 0

    # -- solving ---------------------------------------------------------------------------
    def solve(self, assumptions=()) -> bool:
        """Satisfiability of the permanent clauses together with ``assumptions``."""
        self.stats.solves += 1
        self.model = None
        if not self.ok:
            return False
        self._backtrack(0)
        if self._propagate() != -1:
            self.ok = False
            return False
        assumptions = list(assumptions)
        restart_i = 1
        budget = luby(restart_i) * self.RESTART_BASE
        conflicts = 0
        while True:
            confl = self._propagate()
            if confl != -1:
                self.stats.conflicts += 1
                conflicts += 1
                if not self.trail_lim:
                    self.ok = False
                    return False
                learnt, bj = self._analyze(confl)
                self._backtrack(bj)
                if len(learnt) == 1:
                    self._enqueue(learnt[0], -1)
                else:
                    ci = self._attach(learnt)
                    self.stats.learnt += 1
                    self._enqueue(learnt[0], ci)
                self.var_inc *= self.DECAY
                continue
            if conflicts >= budget:
                conflicts = 0
                restart_i += 1
                budget = luby(restart_i) * self.RESTART_BASE
                self.stats.restarts += 1
                self._backtrack(0)
                continue
            lvl = len(self.trail_lim)
            if lvl < len(assumptions):
                a = assumptions[lvl]
                va = self._val(a)
                if va == -1:
                    self._backtrack(0)
                    return False
                self.trail_lim.append(len(self.trail))
                if va == 0:
                    self._enqueue(a, -1)
                continue
            v = self._pick_branch()
            if v == 0:
                self.model = list(self.value)
                self._backtrack(0)
                return True
            self.stats.decisions += 1
            self.trail_lim.append(len(self.trail))
            self._enqueue(v if self.phase[v] else -v, -1)

    def model_value(self, lit: int) -> bool:
        if self.model is None:
            raise RuntimeError("no model available")
        v = self.model[abs(lit)]
        return (v > 0) if lit > 0 else (v < 0)
