from __future__ import annotations

import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_domain
from tmitstar.harness.oracles import discrete_bfs_oracle
from tmitstar.predicates import And, Atom, Not
from tmitstar.taskplan import (PlanningEncoding, PlanValidationError, SymbolicAction, SymbolicDomain,
                               TaskPlanner, Unsatisfiable, simulate_discrete, solve_next_plan)


def chain_domain(n=4):
    """Symbols p0..p{n-1}; ``a_i`` needs ``p_{i-1}`` and not ``p_i`` and sets ``p_i``; a_skip sets the last."""
    last = n - 1
    acts = [SymbolicAction(i, f"a{i}", And(((Atom(i - 1),) if i else ()) + (Not(Atom(i)),)),
                           frozenset({i}), frozenset()) for i in range(n)]
    acts.append(SymbolicAction(n, "a_skip", And((Atom(0), Not(Atom(last)))), frozenset({last}), frozenset()))
    return SymbolicDomain(tuple(f"p{i}" for i in range(n)), tuple(acts), (False,) * n, And((Atom(n - 1),)))


def minimal_plans(domain, max_len):
    """Action sequences reaching the goal whose proper prefixes do not reach it."""
    out = []
    for n in range(max_len + 1):
        for seq in itertools.product(domain.actions, repeat=n):
            xi, ok = domain.initial, True
            for j, a in enumerate(seq):
                if not a.applicable(xi) or (j and domain.goal.evaluate(xi)):
                    ok = False
                    break
                xi = a.apply(xi)
            if ok and domain.goal.evaluate(xi) and (n == 0 or not domain.goal.evaluate(domain.initial)):
                out.append(tuple(a.id for a in seq))
    return out


def test_first_plan_of_pick_place_problem(one_object_problem):
    tp = TaskPlanner(SymbolicDomain.from_problem(one_object_problem))
    plan = tp.next_plan()
    assert plan.names() == ["pick(o, left)", "place(o, right)"]
    final = simulate_discrete(plan, one_object_problem.initial_discrete)
    assert one_object_problem.goal.discrete_part.evaluate(final)


def test_shortest_plan_first_then_blocking():
    d = chain_domain()
    tp = TaskPlanner(d)
    first = tp.next_plan()
    assert first.names() == ["a0", "a_skip"]
    rest = []
    tp.block(first, None)
    while (plan := tp.next_plan()) is not None:
        rest.append(plan.names())
        tp.block(plan, None)
    assert rest[0] == ["a0", "a1", "a_skip"]
    assert sorted(rest[1:]) == [["a0", "a1", "a2", "a3"], ["a0", "a1", "a2", "a_skip"]]
    assert tp.exhausted


def test_prefix_block_excludes_every_extension():
    d = chain_domain()
    enc = PlanningEncoding(d)
    plan = solve_next_plan(enc)
    enc.block_prefix(plan, 1)  # nothing may start with a0 any more
    with pytest.raises(Unsatisfiable):
        solve_next_plan(enc, max_horizon=8)
    with pytest.raises(ValueError):
        enc.block_prefix(plan, 0)


def test_simulate_discrete_reports_failing_step():
    d = chain_domain()
    with pytest.raises(PlanValidationError) as e:
        simulate_discrete([d.actions[0], d.actions[2]], d.initial)
    assert e.value.step == 2


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10**6))
def test_enumeration_matches_brute_force(seed):
    d = random_domain(np.random.default_rng(seed), n_symbols=4, n_actions=4, goal_size=1)
    expect = minimal_plans(d, 3)
    tp = TaskPlanner(d, max_horizon=3)
    got = []
    while (plan := tp.next_plan()) is not None:
        assert d.goal.evaluate(simulate_discrete(plan, d.initial))
        got.append(tuple(plan.action_ids))
        tp.block(plan, None)
    assert sorted(got) == sorted(expect)
    assert [len(p) for p in got] == sorted(len(p) for p in got)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10**6))
def test_first_plan_length_equals_bfs(seed):
    d = random_domain(np.random.default_rng(seed))
    bfs = discrete_bfs_oracle(d)
    plan = TaskPlanner(d, max_horizon=12).next_plan()
    if bfs is None or bfs > 12:
        assert plan is None
    else:
        assert len(plan) == bfs


def test_horizon_extension_only_appends_clauses():
    d = chain_domain(6)
    enc = PlanningEncoding(d)
    counts = []
    for _ in range(5):
        before = enc.clause_count
        enc.add_step()
        counts.append(enc.clause_count - before)
    # per-step clause count does not grow with the horizon
    assert len(set(counts[1:])) == 1 and counts[0] < counts[1]
    assert enc.clauses_per_step[1:] == counts
