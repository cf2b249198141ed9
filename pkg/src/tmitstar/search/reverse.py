"""Lazy reverse search: cost-to-go over the unvalidated graph.

An LPA*-style label-correcting search rooted at the goal vertices. Every
intramode edge not yet known to be in collision counts as traversable, and
mode transitions are followed backwards (a transition ``f -> t`` lets
``h(f) = h(t)``), so ``h`` never overestimates the cost over the validated
graph. The queue is always processed to exhaustion, leaving every vertex
consistent; updates after vertex insertion or edge invalidation are local
repairs, and a connection-radius change resets and recomputes from scratch
(one multi-source Dijkstra over the reversed graph). Invalidated
edges may be repaired in groups: until a repair, ``h`` is the cost-to-go of
a supergraph and therefore still admissible and consistent.
"""
from __future__ import annotations

import heapq
import math

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import dijkstra

from tmitstar.counters import Counters
from tmitstar.hybridspace import SearchGraph

INF = math.inf


class ReverseSearch:
    def __init__(self, graph: SearchGraph, counters: Counters | None = None):
        self.graph = graph
        self.counters = counters or Counters()
        self.g = np.zeros(0)
        self.rhs = np.zeros(0)
        self.bp = np.zeros(0, dtype=np.int64)
        self.heap: list[tuple[float, int]] = []
        self._n = 0
        self._nt = 0
        self._radii: dict[int, float] = {}
        self._pending: list[tuple[int, int]] = []
        self.resets = 0

    # -- public ------------------------------------------------------------------------
    @property
    def h(self) -> np.ndarray:
        return self.g

    def h_of(self, vid: int) -> float:
        return float(self.g[vid]) if vid < len(self.g) else INF

    def update(self) -> None:
        """Bring ``h`` up to date with the graph's committed structure."""
        graph = self.graph
        radii = {m: graph.connection_radius(m) for m in range(len(graph.modes)) if graph.mode_vertices[m]}
        changed = any(m in self._radii and self._radii[m] != r for m, r in radii.items())
        self._radii = radii
        if changed or self._n == 0:
            self._pending = []
            self.reset()
        else:
            self._insert()
            self._seed_pending()
        self._compute()

    def reset(self) -> None:
        """Recompute ``h`` from scratch; leaves every vertex consistent and the queue empty."""
        graph = self.graph
        n = graph.n_vertices
        self.g = np.full(n, INF)
        self.rhs = np.full(n, INF)
        self.bp = np.full(n, -1, dtype=np.int64)
        self.heap = []
        self._n = n
        self._nt = len(graph.transition_list)
        self.resets += 1
        goals = graph.goal_vertices()
        if not goals or n == 0:
            return
        rev = self._reversed_graph()
        dist, pred, _ = dijkstra(rev, directed=True, indices=goals, return_predecessors=True, min_only=True)
        self.counters.reverse_pops += int(np.isfinite(dist).sum())
        self.g[:] = dist
        self.rhs[:] = dist
        self.bp[:] = np.where(pred >= 0, pred, -1)
        self.bp[goals] = -1

    def _reversed_graph(self) -> csr_matrix:
        """Adjacency with every forward edge u -> w stored as w -> u (intramode edges are symmetric)."""
        graph = self.graph
        n = graph.n_vertices
        rows, cols, data = [], [], []
        for mid in range(len(graph.modes)):
            csr = graph.csr(mid)
            if csr is None or len(csr.indices) == 0:
                continue
            deg = np.diff(csr.indptr)
            src = np.repeat(csr.vids[:len(deg)], deg)
            ok = np.isfinite(csr.costs)
            rows.append(src[ok])
            cols.append(csr.indices[ok])
            data.append(csr.costs[ok])
        goal = graph.goal
        tr = [(t, f) for f, _, t in graph.transition_list if not goal[f]]
        if tr:
            t_arr = np.asarray(tr, dtype=np.int64)
            rows.append(t_arr[:, 0])
            cols.append(t_arr[:, 1])
            data.append(np.zeros(len(tr)))
        if not rows:
            return csr_matrix((n, n))
        rows_a, cols_a, data_a = np.concatenate(rows), np.concatenate(cols), np.concatenate(data)
        # edges out of goal vertices are never used by the forward search
        keep = ~np.asarray(goal, dtype=bool)[cols_a]
        return csr_matrix((data_a[keep], (rows_a[keep], cols_a[keep])), shape=(n, n))

    @property
    def pending(self) -> int:
        return len(self._pending)

    def invalidate(self, a: int, b: int, repair: bool = True) -> None:
        """Edge ``a-b`` was found in collision: mask it and (optionally now) repair locally."""
        self.graph.invalidate_edge(a, b)
        self._pending.append((a, b))
        if repair:
            self.repair()

    def repair(self) -> None:
        """Propagate every edge invalidated since the last repair."""
        self._seed_pending()
        self._compute()

    def _seed_pending(self) -> None:
        for a, b in self._pending:
            for v, w in ((a, b), (b, a)):
                if v < self._n and self.bp[v] == w and not self.graph.goal[v]:
                    self._recompute_rhs(v)
                    self._push_if_inconsistent(v)
        self._pending = []

    # -- internals ------------------------------------------------------------------------
    def _insert(self) -> None:
        graph = self.graph
        n_old, n = self._n, graph.n_vertices
        if n > n_old:
            self.g = np.concatenate([self.g, np.full(n - n_old, INF)])
            self.rhs = np.concatenate([self.rhs, np.full(n - n_old, INF)])
            self.bp = np.concatenate([self.bp, np.full(n - n_old, -1, dtype=np.int64)])
            self._n = n
            for x in range(n_old, n):
                if graph.goal[x]:
                    self.rhs[x] = 0.0
                else:
                    self._recompute_rhs(x)
                self._push_if_inconsistent(x)
        for f, _, t in graph.transition_list[self._nt:]:
            if not graph.goal[f] and self.g[t] < self.rhs[f]:
                self.rhs[f] = self.g[t]
                self.bp[f] = t
                self._push_if_inconsistent(f)
        self._nt = len(graph.transition_list)

    def _key(self, v: int) -> float:
        g, r = self.g[v], self.rhs[v]
        return float(g if g < r else r)

    def _push_if_inconsistent(self, v: int) -> None:
        if self.g[v] != self.rhs[v]:
            heapq.heappush(self.heap, (self._key(v), v))

    def _recompute_rhs(self, v: int) -> None:
        graph = self.graph
        best, arg = INF, -1
        ids, costs = graph.neighbors(v)
        if len(ids):
            vals = costs + self.g[ids]
            i = int(vals.argmin())
            if vals[i] < best:
                best, arg = float(vals[i]), int(ids[i])
        for _, t in graph.out_transitions.get(v, ()):
            if self.g[t] < best:
                best, arg = float(self.g[t]), t
        self.rhs[v] = best
        self.bp[v] = arg

    def _compute(self) -> None:
        graph = self.graph
        heap, g, rhs, bp = self.heap, self.g, self.rhs, self.bp
        goal = graph.goal
        while heap:
            k, u = heapq.heappop(heap)
            gu, ru = g[u], rhs[u]
            if gu == ru or k != (gu if gu < ru else ru):
                continue
            self.counters.reverse_pops += 1
            if gu > ru:
                g[u] = ru
                ids, costs = graph.neighbors(u)
                if len(ids):
                    cand = costs + ru
                    better = np.nonzero(cand < rhs[ids])[0]
                    for i in better:
                        v = int(ids[i])
                        if goal[v]:
                            continue
                        rhs[v] = cand[i]
                        bp[v] = u
                        gv = g[v]
                        heapq.heappush(heap, (float(gv if gv < cand[i] else cand[i]), v))
                for _, f in graph.in_transitions.get(u, ()):
                    if not goal[f] and ru < rhs[f]:
                        rhs[f] = ru
                        bp[f] = u
                        heapq.heappush(heap, (float(min(g[f], ru)), f))
            else:
                g[u] = INF
                ids, _ = graph.neighbors(u)
                preds = [int(v) for v in ids[bp[ids] == u]] if len(ids) else []
                preds += [f for _, f in graph.in_transitions.get(u, ()) if bp[f] == u]
                preds.append(u)
                for v in preds:
                    if goal[v]:
                        continue
                    self._recompute_rhs(v)
                    self._push_if_inconsistent(v)
