from __future__ import annotations

import itertools
import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tmitstar.hybridspace import (NULL_ACTION, HybridState, PreconditionError, SearchGraph,
                                  connection_radius, hybrid_distance, intramode_distance,
                                  mark_reachable, radius_constant)

coords = st.floats(-50, 50, allow_nan=False)
points = st.tuples(coords, coords)


def state(x, y, xi=(True,), poses=None, attached=None, offset=None):
    return HybridState((float(x), float(y)), dict(poses or {}), tuple(xi), attached, offset)


class Toggle:
    """Flips the single discrete symbol; always applicable."""

    def __init__(self, aid=0):
        self.id = aid
        self.name = f"toggle{aid}"

    def is_satisfied(self, q):
        return True

    def apply(self, q):
        return HybridState(q.robot_config, dict(q.object_poses), (not q.discrete[0],) + q.discrete[1:])


class SetBit:
    """Sets symbol ``i`` when symbol ``i - 1`` is set (a chain of modes)."""

    def __init__(self, i):
        self.id = i
        self.name = f"set{i}"
        self.i = i

    def is_satisfied(self, q):
        return q.discrete[self.i - 1] and not q.discrete[self.i]

    def apply(self, q):
        xi = list(q.discrete)
        xi[self.i] = True
        return HybridState(q.robot_config, dict(q.object_poses), tuple(xi))


def test_intramode_distance_examples():
    assert intramode_distance(state(0, 0), state(3, 4)) == 5.0
    assert intramode_distance(state(1, 1), state(1, 1)) == 0.0
    assert intramode_distance(state(1, 1), state(1, 2)) == 1.0


def test_intramode_distance_rejects_different_modes():
    with pytest.raises(ValueError):
        intramode_distance(state(0, 0, (True,)), state(0, 1, (False,)))


@given(points, points, points)
def test_intramode_metric_properties(a, b, c):
    qa, qb, qc = state(*a), state(*b), state(*c)
    assert intramode_distance(qa, qb) == intramode_distance(qb, qa)
    assert intramode_distance(qa, qc) <= intramode_distance(qa, qb) + intramode_distance(qb, qc) + 1e-9
    assert (intramode_distance(qa, qb) == 0.0) == (a == b)


def test_hybrid_distance_same_mode_and_no_transitions():
    g = SearchGraph(2, 100.0)
    a, b = state(0, 0, (True,)), state(0, 1, (True,))
    g.add_state(a)
    assert hybrid_distance(a, b, g) == 1.0
    c = state(5, 5, (False,))
    g.add_state(c)
    assert hybrid_distance(a, c, g) == math.inf


def test_hybrid_distance_matches_path_enumeration_on_three_vertex_graph():
    g = SearchGraph(2, 100.0)
    a = state(0, 0, (True,))
    g.add_state(a)
    t = state(3, 4, (True,))
    mode_b = mark_reachable(g, t, Toggle())
    b = state(6, 8, (False,))
    # one transition: |a - t| + |psi(t) - b|, psi leaves the configuration unchanged
    assert hybrid_distance(a, b, g) == pytest.approx(5.0 + 5.0)
    assert g.mode_of(b) == mode_b
    # directed: nothing leads back
    assert hybrid_distance(b, a, g) == math.inf


def test_hybrid_distance_takes_cheapest_discovered_chain():
    g = SearchGraph(2, 100.0)
    a = state(0, 0, (True, False, False))
    g.add_state(a)
    s1 = [state(x, 0, (True, False, False)) for x in (1, 10)]
    for s in s1:
        mark_reachable(g, s, SetBit(1))
    mid = state(2, 0, (True, True, False))
    mark_reachable(g, mid, SetBit(2))
    b = state(3, 0, (True, True, True))
    # enumerate chains through each first transition
    expect = min(abs(x - 0) + abs(2 - x) + 1 for x in (1, 10))
    assert hybrid_distance(a, b, g) == pytest.approx(expect)


@settings(max_examples=40, deadline=None)
@given(st.lists(points, min_size=1, max_size=5), points, points)
def test_hybrid_distance_nonincreasing_when_transitions_are_added(ts, pa, pb):
    g = SearchGraph(2, 100.0)
    a, b = state(*pa, (True,)), state(*pb, (False,))
    g.add_state(a)
    prev = hybrid_distance(a, b, g)
    for p in ts:
        mark_reachable(g, state(*p, (True,)), Toggle())
        d = hybrid_distance(a, b, g)
        assert d <= prev
        prev = d
    # the over-approximation equals the best single-transition detour here
    assert prev == pytest.approx(min(math.dist(pa, p) + math.dist(p, pb) for p in ts))


def test_mark_reachable_effects_and_dedup():
    g = SearchGraph(2, 100.0)
    q0 = state(0, 0, (True,))
    g.add_state(q0)
    m1 = mark_reachable(g, state(1, 0), Toggle())
    m2 = mark_reachable(g, state(2, 0), Toggle())
    assert m1 == m2 != g.mode_of(q0)
    assert g.modes[m1].family.xi == (False,)
    n_tr = len(g.transitions)
    assert mark_reachable(g, state(2, 0), Toggle()) == m2  # idempotent
    assert len(g.transitions) == n_tr


def test_null_action_keeps_mode():
    g = SearchGraph(2, 100.0)
    q0 = state(0, 0)
    g.add_state(q0)
    assert mark_reachable(g, q0, NULL_ACTION) == g.mode_of(q0)
    assert not g.transitions


def test_mark_reachable_rejects_unsatisfied_precondition():
    g = SearchGraph(2, 100.0)
    g.add_state(state(0, 0, (False, False)))
    with pytest.raises(PreconditionError):
        mark_reachable(g, state(0, 0, (False, False)), SetBit(1))


def test_mark_reachable_requires_reachable_from_mode():
    g = SearchGraph(2, 100.0)
    g.add_state(state(0, 0, (True,)))
    with pytest.raises(ValueError):
        mark_reachable(g, state(0, 0, (False,)), Toggle())


def test_pick_effect_creates_holding_mode(one_object_problem):
    p = one_object_problem
    g = SearchGraph(2, p.scene.config_measure)
    g.add_state(p.initial_state)
    pick = p.action_by_name("pick(o, left)")
    q = p.initial_state.with_config((2.5, 5.5))
    mid = mark_reachable(g, q, pick)
    mode = g.modes[mid]
    assert mode.attached == "o" and "o" not in mode.ungrasped_poses
    assert mode.family.xi[p.symbol_index["holding(o)"]]
    assert not mode.family.xi[p.symbol_index["handempty"]]


def test_attached_pose_is_rigid():
    q = HybridState((1.0, 2.0), {"o": (1.5, 2.0)}, (True,), "o", (0.5, 0.0))
    q2 = q.with_config((4.0, 4.0))
    assert q2.object_poses["o"] == (4.5, 4.0)
    assert q2.with_config((1.0, 2.0)).object_poses["o"] == q.object_poses["o"]


def test_connection_radius_schedule():
    gamma = radius_constant(100.0, 2)
    for n in (2, 10, 1000):
        assert connection_radius(n, 2, 100.0) == pytest.approx(1.1 * gamma * (math.log(n) / n) ** 0.5)
    rs = [connection_radius(n, 2, 100.0) for n in range(3, 2000, 50)]
    assert all(a >= b for a, b in zip(rs, rs[1:]))


def test_implicit_edges_follow_committed_radius():
    g = SearchGraph(2, 100.0)
    mid, _ = g.add_mode((True,), {})
    pts = list(itertools.product(range(5), range(5)))
    vids = [g.add_vertex(mid, p) for p in pts]
    g.commit()
    r = g.connection_radius(mid)
    for a, b in itertools.combinations(vids, 2):
        assert g.adjacent(a, b) == (math.dist(g.configs[a], g.configs[b]) <= r)
    ids, costs = g.neighbors(vids[0])
    assert sorted(ids.tolist()) == sorted(v for v in vids[1:] if g.adjacent(vids[0], v))
    for v, c in zip(ids.tolist(), costs.tolist()):
        assert c == pytest.approx(math.dist(g.configs[vids[0]], g.configs[v]))
