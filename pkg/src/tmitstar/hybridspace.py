"""Hybrid state space: states, modes, mode families and the multimodal search graph.

A mode fixes the discrete symbol vector, the poses of every ungrasped object and
(when something is held) the grasp offset; only the robot configuration varies
inside it. The search graph stores batch-sampled vertices per mode, connects
vertices of the same mode implicitly within the per-mode connection radius and
records validated mode transitions explicitly.
"""
from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field
from typing import Any, Callable, Iterable, Mapping, Protocol, Sequence

import numpy as np
from scipy.spatial import cKDTree

Pose = tuple[float, float]

#: tuning factor applied on top of the measure-based radius constant
RADIUS_TUNING = 1.1


@dataclass(frozen=True, eq=True)
class HybridState:
    """Robot configuration, object poses and the discrete symbol vector.

    ``grasp_offset`` is the rigid offset of the attached object relative to
    the robot configuration; the attached object's pose is always
    ``robot_config + grasp_offset`` computed by :meth:`with_config`.
    """

    robot_config: tuple[float, ...]
    object_poses: Mapping[str, Pose]
    discrete: tuple[bool, ...]
    attached: str | None = None
    grasp_offset: Pose | None = None

    __hash__ = None  # type: ignore[assignment]

    @property
    def config(self) -> np.ndarray:
        return np.asarray(self.robot_config, dtype=float)

    def with_config(self, config: Sequence[float]) -> HybridState:
        config = tuple(float(c) for c in config)
        poses = self.object_poses
        if self.attached is not None:
            poses = dict(poses)
            poses[self.attached] = attached_pose(config, self.grasp_offset)
        return HybridState(config, poses, self.discrete, self.attached, self.grasp_offset)

    def ungrasped_poses(self) -> dict[str, Pose]:
        return {o: p for o, p in self.object_poses.items() if o != self.attached}

    def mode_key(self) -> tuple:
        return mode_key(self.discrete, self.ungrasped_poses(), self.attached, self.grasp_offset)


def attached_pose(config: Sequence[float], offset: Pose | None) -> Pose:
    if offset is None:
        raise ValueError("attached object without a grasp offset")
    return (config[0] + offset[0], config[1] + offset[1])


def mode_key(discrete: Sequence[bool], ungrasped: Mapping[str, Pose],
             attached: str | None, offset: Pose | None) -> tuple:
    # bitwise-exact match on poses; effects are deterministic so no tolerance is needed
    return (tuple(bool(b) for b in discrete), tuple(sorted(ungrasped.items())),
            attached, None if offset is None else tuple(offset))


@dataclass(frozen=True)
class ModeFamily:
    """All modes sharing one discrete symbol setting."""

    xi: tuple[bool, ...]


@dataclass
class Mode:
    family: ModeFamily
    ungrasped_poses: dict[str, Pose]
    id: int
    attached: str | None = None
    grasp_offset: Pose | None = None
    viable_actions: list[tuple[int, int]] = field(default_factory=list)

    @property
    def key(self) -> tuple:
        return mode_key(self.family.xi, self.ungrasped_poses, self.attached, self.grasp_offset)

    def state(self, config: Sequence[float]) -> HybridState:
        config = tuple(float(c) for c in config)
        poses = dict(self.ungrasped_poses)
        if self.attached is not None:
            poses[self.attached] = attached_pose(config, self.grasp_offset)
        return HybridState(config, poses, self.family.xi, self.attached, self.grasp_offset)


class Action(Protocol):
    """What the graph needs from an action: a checkable precondition and an effect."""

    id: int
    name: str

    def is_satisfied(self, q: HybridState) -> bool: ...

    def apply(self, q: HybridState) -> HybridState: ...


class NullAction:
    """The null action: always applicable, identity effect."""

    id = -1
    name = "null"

    def is_satisfied(self, q: HybridState) -> bool:
        return True

    def apply(self, q: HybridState) -> HybridState:
        return q

    def __repr__(self) -> str:
        return "NullAction()"


NULL_ACTION = NullAction()


class PreconditionError(ValueError):
    pass


def unit_ball_volume(d: int) -> float:
    return math.pi ** (d / 2) / math.gamma(d / 2 + 1)


def radius_constant(measure: float, d: int) -> float:
    """Lower bound on the RGG constant for asymptotic optimality (PRM*-style)."""
    return 2.0 * (1.0 + 1.0 / d) ** (1.0 / d) * (measure / unit_ball_volume(d)) ** (1.0 / d)


def connection_radius(n: int, d: int, measure: float, eta: float = RADIUS_TUNING) -> float:
    n = max(n, 2)
    return eta * radius_constant(measure, d) * (math.log(n) / n) ** (1.0 / d)


def intramode_distance(a: HybridState, b: HybridState) -> float:
    if a.mode_key() != b.mode_key():
        raise ValueError("states lie in different modes; use hybrid_distance")
    return math.dist(a.robot_config, b.robot_config)


_EMPTY_IDS = np.zeros(0, np.int64)
_EMPTY_COSTS = np.zeros(0)


@dataclass
class _ModeCSR:
    """Committed intramode adjacency of one mode (global vertex ids)."""

    vids: np.ndarray
    indptr: np.ndarray
    indices: np.ndarray
    costs: np.ndarray
    radius: float


class SearchGraph:
    """Vertices per mode, implicit radius edges and explicit transition edges.

    Mutation (``add_vertex``, ``mark_reachable``) and search-visible structure
    are separated: intramode adjacency only changes on :meth:`commit`, so the
    searches always operate on a consistent snapshot.
    """

    def __init__(self, dim: int, measure: float, eta: float = RADIUS_TUNING,
                 is_goal: Callable[[HybridState], bool] | None = None):
        self.dim = dim
        self.measure = measure
        self.eta = eta
        self.is_goal_state = is_goal or (lambda q: False)
        self.modes: list[Mode] = []
        self._mode_index: dict[tuple, int] = {}
        self.vertex_mode: list[int] = []
        self.configs: list[tuple[float, ...]] = []
        self.goal: list[bool] = []
        self.mode_vertices: list[list[int]] = []
        self._vertex_index: dict[tuple, int] = {}
        self.transitions: set[tuple[int, int, int]] = set()
        self.transition_list: list[tuple[int, int, int]] = []
        self.out_transitions: dict[int, list[tuple[int, int]]] = {}
        self.in_transitions: dict[int, list[tuple[int, int]]] = {}
        self._transition_from: dict[tuple[int, int], int] = {}
        self.transition_actions: dict[int, Any] = {}
        self.invalid_edges: set[tuple[int, int]] = set()
        self._invalid_by_mode: dict[int, list[tuple[int, int]]] = {}
        self._csr: dict[int, _ModeCSR] = {}
        # committed snapshot per mode: vertex count and radius; adjacency is built on first use
        self._committed: dict[int, tuple[int, float]] = {}
        self._local: list[int] = []  # position of each vertex within its mode's vertex list
        self._dirty: set[int] = set()
        self.committed_vertices = 0
        self.epoch = 0

    # -- modes -----------------------------------------------------------------
    def add_mode(self, discrete: Sequence[bool], ungrasped: Mapping[str, Pose],
                 attached: str | None = None, offset: Pose | None = None) -> tuple[int, bool]:
        key = mode_key(discrete, ungrasped, attached, offset)
        if key in self._mode_index:
            return self._mode_index[key], False
        mid = len(self.modes)
        mode = Mode(ModeFamily(tuple(bool(b) for b in discrete)), dict(ungrasped), mid,
                    attached, None if offset is None else tuple(offset))
        self.modes.append(mode)
        self._mode_index[key] = mid
        self.mode_vertices.append([])
        return mid, True

    def mode_of(self, q: HybridState) -> int | None:
        return self._mode_index.get(q.mode_key())

    def families(self) -> set[tuple[bool, ...]]:
        return {m.family.xi for m in self.modes}

    # -- vertices --------------------------------------------------------------
    @property
    def n_vertices(self) -> int:
        return len(self.configs)

    def add_vertex(self, mode_id: int, config: Sequence[float]) -> int:
        config = tuple(float(c) for c in config)
        key = (mode_id, config)
        vid = self._vertex_index.get(key)
        if vid is not None:
            return vid
        vid = len(self.configs)
        self._vertex_index[key] = vid
        self.configs.append(config)
        self.vertex_mode.append(mode_id)
        self._local.append(len(self.mode_vertices[mode_id]))
        self.mode_vertices[mode_id].append(vid)
        self.goal.append(bool(self.is_goal_state(self.state(vid))))
        self._dirty.add(mode_id)
        return vid

    def add_state(self, q: HybridState) -> int:
        mid, _ = self.add_mode(q.discrete, q.ungrasped_poses(), q.attached, q.grasp_offset)
        return self.add_vertex(mid, q.robot_config)

    def state(self, vid: int) -> HybridState:
        return self.modes[self.vertex_mode[vid]].state(self.configs[vid])

    def goal_vertices(self) -> list[int]:
        return [v for v, g in enumerate(self.goal) if g]

    def mode_count(self, mode_id: int) -> int:
        return len(self.mode_vertices[mode_id])

    def radius_for(self, mode_id: int) -> float:
        return connection_radius(self.mode_count(mode_id), self.dim, self.measure, self.eta)

    def connection_radius(self, mode_id: int) -> float:
        """Radius currently used for implicit edges in ``mode_id``."""
        snap = self._committed.get(mode_id)
        return snap[1] if snap is not None else self.radius_for(mode_id)

    # -- transitions -----------------------------------------------------------
    def mark_reachable(self, from_vid: int, action: Action) -> int:
        """Apply ``action`` at vertex ``from_vid``; record the transition; return the target mode."""
        done = self._transition_from.get((from_vid, action.id))
        if done is not None:
            return self.vertex_mode[done]
        q = self.state(from_vid)
        if not action.is_satisfied(q):
            raise PreconditionError(f"{action.name} is not applicable at vertex {from_vid}")
        q2 = action.apply(q)
        to_vid = self.add_state(q2)
        if to_vid == from_vid:
            self._transition_from[(from_vid, action.id)] = to_vid
            return self.vertex_mode[to_vid]
        if self.vertex_mode[to_vid] == self.vertex_mode[from_vid]:
            raise PreconditionError(f"{action.name} does not change the mode")
        self.transitions.add((from_vid, action.id, to_vid))
        self.transition_list.append((from_vid, action.id, to_vid))
        self.out_transitions.setdefault(from_vid, []).append((action.id, to_vid))
        self.in_transitions.setdefault(to_vid, []).append((action.id, from_vid))
        self._transition_from[(from_vid, action.id)] = to_vid
        self.transition_actions[action.id] = action
        return self.vertex_mode[to_vid]

    def transition_target(self, from_vid: int, action_id: int) -> int | None:
        return self._transition_from.get((from_vid, action_id))

    # -- committed intramode adjacency ----------------------------------------------
    def commit(self, update_radius: bool = True) -> set[int]:
        """Publish the vertices added since the last commit; return the modes that changed.

        With ``update_radius=False`` modes that were committed before keep their
        previous radius, so the change is a pure vertex insertion.
        """
        changed = set(self._dirty)
        for mid in sorted(changed):
            old = self._committed.get(mid)
            radius = self.radius_for(mid) if (update_radius or old is None) else old[1]
            self._committed[mid] = (len(self.mode_vertices[mid]), radius)
        self._dirty.clear()
        self.committed_vertices = self.n_vertices
        self.epoch += 1
        return changed

    def csr(self, mid: int) -> _ModeCSR | None:
        """Committed adjacency of ``mode_id`` (built lazily)."""
        snap = self._committed.get(mid)
        if snap is None:
            return None
        csr = self._csr.get(mid)
        if csr is None or len(csr.vids) != snap[0] or csr.radius != snap[1]:
            csr = self._build_csr(mid, *snap)
        return csr

    def _build_csr(self, mid: int, n: int, radius: float) -> _ModeCSR:
        vids = np.asarray(self.mode_vertices[mid][:n], dtype=np.int64)
        if n > 1:
            pts = np.asarray([self.configs[v] for v in self.mode_vertices[mid][:n]], dtype=float)
            tree = cKDTree(pts)
            # self pairs are stored as explicit zeros; vertices are deduplicated, so no other zeros exist
            m = tree.sparse_distance_matrix(tree, radius, output_type="coo_matrix").tocsr()
            m.eliminate_zeros()
            m.sort_indices()
            indptr = m.indptr.astype(np.int64)
            indices = vids[m.indices]
            costs = m.data.astype(float)
        else:
            indptr = np.zeros(n + 1, dtype=np.int64)
            indices = _EMPTY_IDS
            costs = _EMPTY_COSTS
        csr = _ModeCSR(vids, indptr, indices, costs, radius)
        self._csr[mid] = csr
        for a, b in self._invalid_by_mode.get(mid, ()):
            self._mask_edge(csr, a, b)
        return csr

    def _mask_edge(self, csr: _ModeCSR, a: int, b: int) -> None:
        for u, w in ((a, b), (b, a)):
            i = self._local[u]
            if i >= len(csr.vids):
                continue
            lo, hi = csr.indptr[i], csr.indptr[i + 1]
            row = csr.indices[lo:hi]
            j = np.searchsorted(row, w)
            if j < len(row) and row[j] == w:
                csr.costs[lo + j] = math.inf

    def neighbors(self, vid: int) -> tuple[np.ndarray, np.ndarray]:
        """Committed intramode neighbours of ``vid`` and edge costs (inf = known invalid)."""
        csr = self.csr(self.vertex_mode[vid])
        i = self._local[vid]
        if csr is None or i >= len(csr.vids):
            return _EMPTY_IDS, _EMPTY_COSTS
        lo, hi = csr.indptr[i], csr.indptr[i + 1]
        return csr.indices[lo:hi], csr.costs[lo:hi]

    def is_committed(self, vid: int) -> bool:
        snap = self._committed.get(self.vertex_mode[vid])
        return snap is not None and self._local[vid] < snap[0]

    def invalidate_edge(self, a: int, b: int) -> None:
        pair = (min(a, b), max(a, b))
        if pair in self.invalid_edges:
            return
        self.invalid_edges.add(pair)
        self._invalid_by_mode.setdefault(self.vertex_mode[a], []).append(pair)
        csr = self._csr.get(self.vertex_mode[a])
        if csr is not None:
            self._mask_edge(csr, a, b)

    def adjacent(self, a: int, b: int) -> bool:
        """Implicit-edge test against the committed radius."""
        if self.vertex_mode[a] != self.vertex_mode[b] or a == b:
            return False
        return math.dist(self.configs[a], self.configs[b]) <= self.connection_radius(self.vertex_mode[a])


def mark_reachable(graph: SearchGraph, from_state: HybridState, action: Action) -> int:
    """Insert ``from_state`` (if new) and the effect of ``action`` at it; return the target mode id."""
    if graph.mode_of(from_state) is None:
        raise ValueError("from_state does not lie in a reachable mode")
    if not action.is_satisfied(from_state):
        raise PreconditionError(f"{action.name} is not applicable at the given state")
    return graph.mark_reachable(graph.add_state(from_state), action)


def hybrid_distance(a: HybridState, b: HybridState, graph: SearchGraph) -> float:
    """Conservative hybrid-space distance.

    Same mode: Euclidean. Otherwise the cheapest chain of discovered
    transitions ``a -> t1 ~> t2 ~> ... -> b`` with straight intramode legs, or
    ``inf`` when no such chain exists.
    """
    ka, kb = a.mode_key(), b.mode_key()
    if ka == kb:
        return math.dist(a.robot_config, b.robot_config)
    ma, mb = graph.mode_of(a), graph.mode_of(b)
    if ma is None or mb is None:
        return math.inf
    by_mode: dict[int, list[tuple[int, int]]] = {}
    for f, _, t in graph.transitions:
        by_mode.setdefault(graph.vertex_mode[f], []).append((f, t))
    # Dijkstra over transition edges; node = target vertex of a transition
    best: dict[int, float] = {}
    heap: list[tuple[float, int]] = []
    for f, t in by_mode.get(ma, []):
        d = math.dist(a.robot_config, graph.configs[f])
        if d < best.get(t, math.inf):
            best[t] = d
            heapq.heappush(heap, (d, t))
    result = math.inf
    while heap:
        d, t = heapq.heappop(heap)
        if d > best.get(t, math.inf) or d >= result:
            continue
        mt = graph.vertex_mode[t]
        if mt == mb:
            result = min(result, d + math.dist(graph.configs[t], b.robot_config))
        for f2, t2 in by_mode.get(mt, []):
            d2 = d + math.dist(graph.configs[t], graph.configs[f2])
            if d2 < best.get(t2, math.inf):
                best[t2] = d2
                heapq.heappush(heap, (d2, t2))
    return result


def states_equal(a: HybridState, b: HybridState, tol: float = 0.0) -> bool:
    if a.discrete != b.discrete or a.attached != b.attached:
        return False
    if set(a.object_poses) != set(b.object_poses):
        return False
    if not _close(a.robot_config, b.robot_config, tol):
        return False
    if (a.grasp_offset is None) != (b.grasp_offset is None):
        return False
    if a.grasp_offset is not None and not _close(a.grasp_offset, b.grasp_offset, tol):
        return False
    return all(_close(a.object_poses[o], b.object_poses[o], tol) for o in a.object_poses)


def _close(x: Iterable[float], y: Iterable[float], tol: float) -> bool:
    return all(abs(p - q) <= tol for p, q in zip(x, y, strict=True))
