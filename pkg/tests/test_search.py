from __future__ import annotations

import heapq
import math

import numpy as np
import pytest

from conftest import make_problem
from tmitstar.hybridspace import HybridState
from tmitstar.search.anytime import PlannerConfig, TMITStar
from tmitstar.search.forward import EdgeValidator, dijkstra_full_validation, forward_search, validate_edge
from tmitstar.search.reverse import ReverseSearch
from tmitstar.world2d.generate import generate_instance
from tmitstar.world2d.problem import problem_from_dict


def reference_cost_to_go(graph) -> np.ndarray:
    """Multi-source Dijkstra from the goals, following edges and transitions backwards."""
    n = graph.n_vertices
    back: list[list[tuple[int, float]]] = [[] for _ in range(n)]
    for u in range(n):
        ids, costs = graph.neighbors(u)
        for w, c in zip(ids.tolist(), costs.tolist()):
            if math.isfinite(c):
                back[w].append((u, c))
    for f, _, t in graph.transition_list:
        back[t].append((f, 0.0))
    dist = np.full(n, math.inf)
    heap = [(0.0, v) for v in graph.goal_vertices()]
    for _, v in heap:
        dist[v] = 0.0
    while heap:
        d, w = heapq.heappop(heap)
        if d > dist[w]:
            continue
        for u, c in back[w]:
            if d + c < dist[u]:
                dist[u] = d + c
                heapq.heappush(heap, (d + c, u))
    return dist


@pytest.fixture(scope="module")
def grown():
    """Planner state after a few batches on a small cluttered instance, with a solution found."""
    problem = problem_from_dict(generate_instance("clutter", 2, 1), name="c2")
    planner = TMITStar(problem, PlannerConfig(seed=4))
    planner._new_plan()
    while planner.batch_index < 4 or not planner.improvements:
        planner.step()
    return problem, planner


def test_reverse_search_matches_reference_dijkstra(grown):
    _, planner = grown
    rev = ReverseSearch(planner.graph)
    rev.update()
    np.testing.assert_allclose(rev.h, reference_cost_to_go(planner.graph), rtol=1e-9, atol=1e-9)


def test_local_repairs_after_invalidation_match_recomputation(grown):
    _, planner = grown
    graph = planner.graph
    rev = ReverseSearch(graph)
    rev.update()
    before = rev.h.copy()
    # cut random edges, repairing after some of them and in one group at the end
    rng = np.random.default_rng(0)
    cut = []
    for _ in range(30):
        u = int(rng.integers(0, graph.n_vertices))
        ids, costs = graph.neighbors(u)
        fin = ids[np.isfinite(costs)]
        if len(fin):
            w = int(fin[0])
            rev.invalidate(u, w, repair=bool(rng.random() < 0.5))
            cut.append((u, w))
    rev.repair()
    assert cut
    np.testing.assert_allclose(rev.h, reference_cost_to_go(graph), rtol=1e-9, atol=1e-9)
    assert np.all(rev.h >= before - 1e-12)


def test_isolated_vertex_gets_infinite_cost_to_go():
    p = make_problem(regions=[("corner", (8.5, 8.5, 9.5, 9.5))], start=(1.0, 1.0),
                     geometric_goal=["robot_in_region(corner)"])
    planner = TMITStar(p, PlannerConfig(seed=0))
    planner._new_plan()
    planner.step()
    graph = planner.graph
    rev = ReverseSearch(graph)
    rev.update()
    s = planner.start
    ids, costs = graph.neighbors(s)
    for w in ids.tolist():
        rev.invalidate(s, w)
    assert rev.h_of(s) == math.inf


def test_heuristic_admissible_and_forward_search_optimal(grown):
    problem, planner = grown
    graph = planner.graph
    rev = ReverseSearch(graph)
    rev.update()
    val = EdgeValidator(graph, problem.scene)
    cost, n_checked = dijkstra_full_validation(graph, planner.start, EdgeValidator(graph, problem.scene))
    assert rev.h_of(planner.start) <= cost + 1e-9
    res = forward_search(graph, rev, planner.start, math.inf, val, planner.actions)
    assert res.path is not None
    assert res.cost == pytest.approx(cost, rel=1e-9)
    assert val.counters.edges_validated <= n_checked
    # nothing better than the optimum exists
    assert forward_search(graph, rev, planner.start, cost - 1e-6, val, planner.actions).path is None


def test_validate_edge_examples():
    p = make_problem(objects=[("o", 0.3, (5.0, 8.0))], regions=[("t", (4.0, 7.0, 6.0, 9.0))],
                     obstacles=[("wall", (4.8, 3.0, 5.2, 6.0))], start=(1, 1))
    s = p.initial_state
    a, b = s.with_config((3.0, 4.0)), s.with_config((7.0, 4.0))
    assert not validate_edge(a, b, p.scene)
    assert validate_edge(s.with_config((3.0, 2.0)), s.with_config((7.0, 2.0)), p.scene)
    # sweeping through the ungrasped object
    assert not validate_edge(s.with_config((3.0, 8.0)), s.with_config((7.0, 8.0)), p.scene)
    # clear for the robot, but the carried object hits the wall
    held = HybridState((3.0, 6.6), {"o": (3.0, 5.6)}, s.discrete, "o", (0.0, -1.0))
    assert not validate_edge(held, held.with_config((7.0, 6.6)), p.scene)
    assert validate_edge(held, held.with_config((3.0, 7.5)), p.scene)
    with pytest.raises(ValueError):
        validate_edge(s, held, p.scene)


def test_anytime_costs_strictly_decrease(one_object_problem):
    res = TMITStar(one_object_problem, PlannerConfig(seed=2, clock="work", max_batches=12)).run(1e9)
    assert res.outcome == "Solved"
    ts = [i.t for i in res.improvements]
    cs = [i.cost for i in res.improvements]
    assert ts == sorted(ts)
    assert all(a > b for a, b in zip(cs, cs[1:]))
    assert res.final_cost == cs[-1] and res.initial_time == ts[0]


def test_goal_at_start_is_solved_with_zero_cost():
    p = make_problem(regions=[("home", (0.0, 0.0, 2.0, 2.0))], start=(1.0, 1.0),
                     geometric_goal=["robot_in_region(home)"])
    res = TMITStar(p).run(5.0)
    assert res.outcome == "Solved" and res.final_cost == 0.0
    assert len(res.best.path.segments) == 1 and not res.best.path.actions
