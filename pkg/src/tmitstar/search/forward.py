"""Forward search with lazy edge validation, plus the solution path type.

Edges leave the queue in order of ``g(u) + c(u, w) + h(w)``; an intramode
edge is collision-checked only when it is about to improve ``g(w)``. An
edge found in collision is reported to the reverse search. Those reports
are repaired in groups; in between, ``h`` stays admissible and consistent
because it is the cost-to-go of a supergraph. Stale queue entries are
re-keyed lazily. The search may be cut short by a ``should_stop`` callback,
in which case it reports no path.
"""
from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field

import numpy as np

from tmitstar.counters import Counters
from tmitstar.hybridspace import HybridState, SearchGraph
from tmitstar.search.reverse import ReverseSearch
from tmitstar.world2d.scene import Scene, interpolate

INF = math.inf
REPAIR_EVERY = 16  # invalid edges collected before the reverse search repairs h
STOP_CHECK_EVERY = 256  # forward pops between ``should_stop`` polls


@dataclass
class Segment:
    """A polyline within one mode followed by the action taken at its last state (None = null)."""

    states: list[HybridState]
    action: object | None = None


@dataclass
class SolutionPath:
    segments: list[Segment]
    cost: float
    vertices: list[int] = field(default_factory=list)

    @property
    def actions(self) -> list:
        return [s.action for s in self.segments if s.action is not None]

    def motion_cost(self) -> float:
        return sum(math.dist(a.robot_config, b.robot_config)
                   for s in self.segments for a, b in zip(s.states, s.states[1:]))


def build_path(graph: SearchGraph, chain: list[tuple[int, int | None]], actions: dict) -> SolutionPath:
    """``chain`` = [(start, None), (v1, action id or None), ...] with the id of the action into v_i."""
    segments = [Segment([graph.state(chain[0][0])])]
    for vid, aid in chain[1:]:
        if aid is None:
            segments[-1].states.append(graph.state(vid))
        else:
            segments[-1].action = actions[aid]
            segments.append(Segment([graph.state(vid)]))
    path = SolutionPath(segments, 0.0, [v for v, _ in chain])
    path.cost = path.motion_cost()
    return path


class EdgeValidator:
    """Collision checks of intramode edges, cached per vertex pair."""

    def __init__(self, graph: SearchGraph, scene: Scene, counters: Counters | None = None):
        self.graph = graph
        self.scene = scene
        self.counters = counters or Counters()
        self.valid: set[tuple[int, int]] = set()
        self.resolution = scene.resolution

    def known_valid(self, u: int, w: int) -> bool:
        return (min(u, w), max(u, w)) in self.valid

    def check(self, u: int, w: int) -> bool:
        pair = (min(u, w), max(u, w))
        if pair in self.valid:
            return True
        if pair in self.graph.invalid_edges:
            return False
        self.counters.edges_validated += 1
        ok = validate_edge(self.graph.state(u), self.graph.state(w), self.scene, self.resolution,
                           self.counters)
        if ok:
            self.valid.add(pair)
        else:
            self.counters.edges_invalid += 1
        return ok


def validate_edge(u: HybridState, v: HybridState, scene: Scene, resolution: float | None = None,
                  counters: Counters | None = None) -> bool:
    """Collision check of the straight segment ``u``-``v`` within one mode (carried object included).

    The swept discs are tested exactly, which is at least as strict as checking
    the configurations interpolated at ``resolution`` (or any finer one).
    """
    if u.mode_key() != v.mode_key():
        raise ValueError("validate_edge expects two states of one mode")
    geo = scene.geometry_of(u)
    if counters is not None:
        counters.collision_points += len(interpolate(u.robot_config, v.robot_config,
                                                     resolution or scene.resolution))
    return geo.sweep_clear(u.robot_config, v.robot_config)


@dataclass
class ForwardResult:
    path: SolutionPath | None
    cost: float
    expanded: int = 0
    stopped: bool = False


def forward_search(graph: SearchGraph, reverse: ReverseSearch, start: int, incumbent: float,
                   validator: EdgeValidator, actions: dict, counters: Counters | None = None,
                   should_stop=None) -> ForwardResult:
    """Best path from ``start`` cheaper than ``incumbent`` on the current graph, or none."""
    counters = counters or validator.counters
    if not math.isfinite(reverse.h_of(start)) or reverse.h_of(start) >= incumbent:
        return ForwardResult(None, incumbent)
    g: dict[int, float] = {start: 0.0}
    parent: dict[int, tuple[int, int | None]] = {}
    best_cost = incumbent
    best_goal = -1
    heap: list[tuple[float, float, int, int, float, int]] = []
    goal = graph.goal
    expanded = 0

    def expand(u: int) -> None:
        gu = g[u]
        ids, costs = graph.neighbors(u)
        if len(ids):
            hv = reverse.h[ids]
            keys = gu + costs + hv
            sel = np.nonzero(keys < best_cost)[0]
            for i in sel:
                w = int(ids[i])
                c = float(costs[i])
                if gu + c < g.get(w, INF):
                    heapq.heappush(heap, (float(keys[i]), gu + c, w, u, c, -1))
        for aid, t in graph.out_transitions.get(u, ()):
            kt = gu + reverse.h_of(t)
            if kt < best_cost and gu < g.get(t, INF):
                heapq.heappush(heap, (kt, gu, t, u, 0.0, aid))

    expand(start)
    while heap:
        key, gw_new, w, u, c, aid = heapq.heappop(heap)
        if key >= best_cost:
            break
        gu = g[u]
        if gu + c < gw_new:
            continue  # u improved after this entry was queued; a cheaper entry exists
        if gw_new >= g.get(w, INF):
            continue
        now = gw_new + reverse.h_of(w)
        if now > key:
            if now < best_cost:
                heapq.heappush(heap, (now, gw_new, w, u, c, aid))
            continue
        counters.forward_pops += 1
        if should_stop is not None and counters.forward_pops % STOP_CHECK_EVERY == 0 and should_stop():
            return ForwardResult(None, incumbent, expanded, stopped=True)
        if aid < 0 and not validator.check(u, w):
            reverse.invalidate(u, w, repair=False)
            if reverse.pending >= REPAIR_EVERY:
                reverse.repair()
            continue
        g[w] = gw_new
        parent[w] = (u, None if aid < 0 else aid)
        if goal[w]:
            if gw_new < best_cost:
                best_cost = gw_new
                best_goal = w
            continue
        expanded += 1
        expand(w)
    if best_goal < 0:
        return ForwardResult(None, incumbent, expanded)
    verts = [best_goal]
    while verts[-1] != start:
        verts.append(parent[verts[-1]][0])
    verts.reverse()
    into = [None] + [parent[v][1] for v in verts[1:]]
    path = build_path(graph, list(zip(verts, into)), actions)
    return ForwardResult(path, path.cost, expanded)


def dijkstra_full_validation(graph: SearchGraph, start: int, validator: EdgeValidator) -> tuple[float, int]:
    """Baseline: uniform-cost search that collision-checks every edge it relaxes.

    Returns the optimal cost to a goal over the validated graph and the number
    of distinct edges checked.
    """
    checked: set[tuple[int, int]] = set()
    dist = {start: 0.0}
    heap = [(0.0, start)]
    done: set[int] = set()
    while heap:
        d, u = heapq.heappop(heap)
        if u in done:
            continue
        done.add(u)
        if graph.goal[u]:
            return d, len(checked)
        ids, costs = graph.neighbors(u)
        for w, c in zip(ids.tolist(), costs.tolist()):
            if w in done or not math.isfinite(c):
                continue
            pair = (min(u, w), max(u, w))
            if pair not in checked:
                checked.add(pair)
            if not validate_edge(graph.state(u), graph.state(w), validator.scene, validator.resolution):
                continue
            if d + c < dist.get(w, INF):
                dist[w] = d + c
                heapq.heappush(heap, (d + c, w))
        for _, t in graph.out_transitions.get(u, ()):
            if d < dist.get(t, INF):
                dist[t] = d
                heapq.heappush(heap, (d, t))
    return INF, len(checked)
