"""Brute-force oracles, independent of the planner's data structures.

``discrete_bfs_oracle`` searches the discrete transition system directly
with integer bitmask states. ``grid_tmp_oracle`` solves a discretized version
of a small task-and-motion problem: robot positions on a square grid with
16-connected straight moves, grasps and placements only at grid cells.
"""
from __future__ import annotations

import heapq
import math
from collections import deque
from dataclasses import dataclass

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import dijkstra

from tmitstar.predicates import EPS_SAT, GeoOr
from tmitstar.taskplan import SymbolicDomain
from tmitstar.world2d.problem import Problem

DEFAULT_BFS_CAP = 10**6


class OracleRefusal(RuntimeError):
    """The instance exceeds the oracle's state or memory cap."""


def discrete_bfs_oracle(domain: SymbolicDomain, cap: int = DEFAULT_BFS_CAP) -> int | None:
    """Length of a shortest discrete plan, or None when the goal is unreachable."""
    n = domain.n_symbols

    def unpack(m: int) -> tuple[bool, ...]:
        return tuple(bool(m >> i & 1) for i in range(n))

    start = sum(1 << i for i, b in enumerate(domain.initial) if b)
    adds = [sum(1 << i for i in a.add) for a in domain.actions]
    dels = [sum(1 << i for i in a.delete) for a in domain.actions]
    dist = {start: 0}
    frontier = deque([start])
    while frontier:
        m = frontier.popleft()
        xi = unpack(m)
        if domain.goal.evaluate(xi):
            return dist[m]
        for a, add, dl in zip(domain.actions, adds, dels):
            if not a.pre.evaluate(xi):
                continue
            m2 = (m & ~dl) | add
            if m2 not in dist:
                if len(dist) >= cap:
                    raise OracleRefusal(f"more than {cap} discrete states")
                dist[m2] = dist[m] + 1
                frontier.append(m2)
    return None


# -- grid oracle for small hybrid problems ---------------------------------------------------

_MOVES16 = [(dx, dy) for dx in range(-2, 3) for dy in range(-2, 3)
            if (dx, dy) != (0, 0) and math.gcd(abs(dx), abs(dy)) == 1]

# worst-case ratio between a 16-connected grid path and the straight segment
GRID16_DISTORTION = 1.0 / math.cos(math.atan(1.0 / 2.0) / 2.0)


@dataclass
class GridBracket:
    upper: float
    lower: float
    resolution: float
    n_modes: int


class _Grid:
    def __init__(self, problem: Problem, resolution: float):
        sc = problem.scene
        self.problem = problem
        self.scene = sc
        self.h = resolution
        b = sc.bounds
        self.x0, self.y0 = b.x0, b.y0
        self.nx = int(math.floor((b.x1 - b.x0) / resolution + 1e-9)) + 1
        self.ny = int(math.floor((b.y1 - b.y0) / resolution + 1e-9)) + 1
        ii, jj = np.meshgrid(np.arange(self.nx), np.arange(self.ny), indexing="ij")
        self.points = np.stack([self.x0 + ii.ravel() * resolution, self.y0 + jj.ravel() * resolution], 1)

    def cell_of(self, p) -> tuple[int, int]:
        return (int(round((p[0] - self.x0) / self.h)), int(round((p[1] - self.y0) / self.h)))

    def pos(self, c) -> tuple[float, float]:
        return (self.x0 + c[0] * self.h, self.y0 + c[1] * self.h)

    def flat(self, c) -> int:
        return c[0] * self.ny + c[1]

    def unflat(self, k: int) -> tuple[int, int]:
        return divmod(int(k), self.ny)


def _mode_graph(grid: _Grid, geo) -> tuple[np.ndarray, object]:
    """Valid cells and the sparse 16-connected adjacency (segment-checked) for one mode."""
    n = grid.nx * grid.ny
    ok = geo.valid(grid.points)
    rows, cols, w = [], [], []
    ix = np.arange(n) // grid.ny
    iy = np.arange(n) % grid.ny
    for dx, dy in _MOVES16:
        jx, jy = ix + dx, iy + dy
        inside = (jx >= 0) & (jx < grid.nx) & (jy >= 0) & (jy < grid.ny)
        src = np.nonzero(inside & ok)[0]
        dst = jx[src] * grid.ny + jy[src]
        keep = ok[dst]
        src, dst = src[keep], dst[keep]
        # check intermediate points of the straight segment densely
        length = grid.h * math.hypot(dx, dy)
        steps = max(int(math.ceil(length / (grid.scene.resolution * 0.5))), 1)
        good = np.ones(len(src), dtype=bool)
        for t in np.linspace(0, 1, steps + 1)[1:-1]:
            pts = grid.points[src] * (1 - t) + grid.points[dst] * t
            good &= geo.valid(pts)
        rows.append(src[good])
        cols.append(dst[good])
        w.append(np.full(int(good.sum()), length))
    rows = np.concatenate(rows) if rows else np.zeros(0, int)
    cols = np.concatenate(cols) if cols else np.zeros(0, int)
    w = np.concatenate(w) if w else np.zeros(0)
    return ok, coo_matrix((w, (rows, cols)), shape=(n, n)).tocsr()


def grid_tmp_oracle(problem: Problem, resolution: float, max_modes: int = 5000,
                    max_cells: int = 400_000) -> GridBracket | None:
    """Optimal cost on the discretized hybrid graph, bracketed; None if unsolvable at this resolution.

    Robot configurations are grid cells; a pick is allowed at any valid cell
    satisfying the pick's geometric precondition (the grasp offset is then
    the exact object-minus-robot vector); a place is allowed at any valid cell
    where the carried object is inside the target region. ``upper`` is the grid
    optimum, ``lower = upper / GRID16_DISTORTION`` bounds the optimum over the
    same set of transition states from below. Each object is moved at most
    once (no regrasping), so the result is an upper bound on the optimum over
    all plans.
    """
    grid = _Grid(problem, resolution)
    if grid.nx * grid.ny > max_cells:
        raise OracleRefusal("grid exceeds the cell cap")
    if len(problem.scene.objects) > 2:
        raise OracleRefusal("grid oracle supports at most two objects")
    q0 = problem.initial_state
    start_cell = grid.cell_of(q0.robot_config)
    if math.dist(grid.pos(start_cell), q0.robot_config) > 1e-9:
        raise OracleRefusal("start must lie on the grid")

    modes: dict[tuple, int] = {}
    mode_data: list[tuple] = []  # (ungrasped poses, xi, attached, offset)

    def mode_id(xi, ung, att, off, moved):
        key = (xi, tuple(sorted(ung.items())), att, off, moved)
        if key not in modes:
            if len(modes) >= max_modes:
                raise OracleRefusal("mode cap exceeded")
            modes[key] = len(mode_data)
            mode_data.append((dict(ung), xi, att, off, moved))
        return modes[key]

    graphs: dict[int, tuple] = {}

    def graph_of(mid):
        if mid not in graphs:
            ung, xi, att, off, _ = mode_data[mid]
            geo = problem.scene.geometry(ung, att, off)
            graphs[mid] = _mode_graph(grid, geo)
        return graphs[mid]

    m0 = mode_id(q0.discrete, q0.ungrasped_poses(), None, None, frozenset())
    best: dict[tuple[int, int], float] = {(m0, grid.flat(start_cell)): 0.0}
    heap = [(0.0, m0, grid.flat(start_cell))]
    expanded: set[tuple[int, int]] = set()
    best_goal = math.inf
    while heap:
        d, mid, k = heapq.heappop(heap)
        if d >= best_goal:
            break
        if (mid, k) in expanded:
            continue
        expanded.add((mid, k))
        ok, adj = graph_of(mid)
        dist = dijkstra(adj, indices=int(k))
        reach = np.nonzero(np.isfinite(dist))[0]
        pts = grid.points[reach]
        ung, xi, att, off, moved = mode_data[mid]
        if problem.goal.discrete_holds(xi):
            sat = _terms_hold(problem.scene, problem.goal.geometric_part, pts, ung, att, off)
            if sat.any():
                best_goal = min(best_goal, d + float(dist[reach[sat]].min()))
        for a in problem.actions:
            if not a.discrete_applicable(xi):
                continue
            if a.attach is not None and (att is not None or a.attach not in ung or a.attach in moved):
                continue
            if a.detach is not None and att != a.detach:
                continue
            sat = _terms_hold(problem.scene, a.precondition.geometric_part, pts, ung, att, off)
            xi2 = a.apply_discrete(xi)
            for c in reach[sat]:
                p = grid.points[c]
                ung2 = dict(ung)
                if a.attach is not None:
                    o = ung2.pop(a.attach)
                    att2, off2 = a.attach, (o[0] - p[0], o[1] - p[1])
                elif a.detach is not None:
                    ung2[att] = (p[0] + off[0], p[1] + off[1])
                    att2, off2 = None, None
                else:
                    att2, off2 = att, off
                nd = d + float(dist[c])
                if problem.goal.discrete_holds(xi2) and bool(_terms_hold(
                        problem.scene, problem.goal.geometric_part, p[None, :], ung2, att2, off2)[0]):
                    best_goal = min(best_goal, nd)
                    continue
                moved2 = moved | {a.attach} if a.attach is not None else moved
                if att2 is None and len(moved2) == len(problem.scene.objects):
                    continue  # every object placed and the goal still false: dead end
                m2 = mode_id(xi2, ung2, att2, off2, moved2)
                key = (m2, int(c))
                if nd < best.get(key, math.inf) and key not in expanded:
                    best[key] = nd
                    heapq.heappush(heap, (nd, m2, int(c)))
    if not math.isfinite(best_goal):
        return None
    return GridBracket(best_goal, best_goal / GRID16_DISTORTION, resolution, len(mode_data))


def _terms_hold(scene, terms, pts: np.ndarray, ung: dict, att, off) -> np.ndarray:
    """Vectorized geometric test of a conjunction (disjunctions as any-member) at robot points."""
    ok = np.ones(len(pts), dtype=bool)
    for t in terms:
        members = t.members if isinstance(t, GeoOr) else (t,)
        any_ok = np.zeros(len(pts), dtype=bool)
        for m in members:
            any_ok |= _symbol_holds(scene, m, pts, ung, att, off)
        ok &= any_ok
    return ok


def _symbol_holds(scene, sym, pts, ung, att, off) -> np.ndarray:
    tol = EPS_SAT
    if sym.predicate == "near":
        o = sym.args[0]
        if o == att or o not in ung:
            return np.zeros(len(pts), dtype=bool)
        reach = scene.robot_radius + scene.radius_of[o] + scene.reach
        return np.hypot(pts[:, 0] - ung[o][0], pts[:, 1] - ung[o][1]) <= reach + tol
    if sym.predicate == "in_region":
        o, r = sym.args
        rect = scene.region_by_id[r].rect
        ro = scene.radius_of[o]
        if o == att:
            cx, cy = pts[:, 0] + off[0], pts[:, 1] + off[1]
        else:
            cx = np.full(len(pts), ung[o][0])
            cy = np.full(len(pts), ung[o][1])
        return ((cx - ro >= rect.x0 - tol) & (cx + ro <= rect.x1 + tol)
                & (cy - ro >= rect.y0 - tol) & (cy + ro <= rect.y1 + tol))
    if sym.predicate == "robot_in_region":
        rect = scene.region_by_id[sym.args[0]].rect
        rr = scene.robot_radius
        x, y = pts[:, 0], pts[:, 1]
        return ((x - rr >= rect.x0 - tol) & (x + rr <= rect.x1 + tol)
                & (y - rr >= rect.y0 - tol) & (y + rr <= rect.y1 + tol))
    raise OracleRefusal(f"no grid test for predicate {sym.predicate!r}")
