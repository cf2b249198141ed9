"""Split discrete/geometric predicates, distance functions and manifold projection.

Discrete predicates become Boolean symbols in the state vector and are the
only thing the task planner sees. Geometric predicates carry a distance
function that is zero exactly where the predicate holds, plus its analytic
gradient with respect to the robot configuration; precondition-satisfying
states are found by descending the summed distance of a formula's geometric
members.
"""
from __future__ import annotations

import enum
import math
import re
from dataclasses import dataclass
from typing import Callable, Sequence, Union

import numpy as np

from tmitstar.hybridspace import HybridState
from tmitstar.world2d.scene import Scene

EPS_SAT = 1e-6
MAX_ITERS = 100
ARMIJO_C = 1e-4


class ConfigurationError(ValueError):
    """A predicate or formula was used with missing or unknown arguments."""


# -- discrete formulas ------------------------------------------------------------------

@dataclass(frozen=True)
class Atom:
    index: int

    def evaluate(self, xi: Sequence[bool]) -> bool:
        return bool(xi[self.index])

    def atoms(self) -> set[int]:
        return {self.index}


@dataclass(frozen=True)
class Not:
    item: Formula

    def evaluate(self, xi):
        return not self.item.evaluate(xi)

    def atoms(self):
        return self.item.atoms()


@dataclass(frozen=True)
class And:
    items: tuple[Formula, ...] = ()

    def evaluate(self, xi):
        return all(i.evaluate(xi) for i in self.items)

    def atoms(self):
        return set().union(*(i.atoms() for i in self.items)) if self.items else set()


@dataclass(frozen=True)
class Or:
    items: tuple[Formula, ...] = ()

    def evaluate(self, xi):
        return any(i.evaluate(xi) for i in self.items)

    def atoms(self):
        return set().union(*(i.atoms() for i in self.items)) if self.items else set()


Formula = Union[Atom, Not, And, Or]
TRUE = And(())


def literal_conjunction(f: Formula) -> list[tuple[int, bool]] | None:
    """``[(symbol, polarity), ...]`` if ``f`` is a conjunction of literals, else None."""
    if isinstance(f, Atom):
        return [(f.index, True)]
    if isinstance(f, Not) and isinstance(f.item, Atom):
        return [(f.item.index, False)]
    if isinstance(f, And):
        out = []
        for item in f.items:
            sub = literal_conjunction(item)
            if sub is None:
                return None
            out.extend(sub)
        return out
    return None


# -- geometric symbols ------------------------------------------------------------------

class GeometricSymbol:
    """A geometric predicate bound to concrete arguments in a scene."""

    predicate: str = ""
    pred_id: int = 0

    def __init__(self, scene: Scene, args: Sequence[str], pred_id: int = 0):
        for a in args:
            if not a or a.startswith("?"):
                raise ConfigurationError(f"unbound argument {a!r} for {self.predicate}")
        self.scene = scene
        self.args = tuple(args)
        self.pred_id = pred_id
        self._check_args()

    def _check_args(self) -> None:
        pass

    @property
    def name(self) -> str:
        return f"{self.predicate}({', '.join(self.args)})"

    def __repr__(self) -> str:
        return self.name

    def __eq__(self, other):
        return isinstance(other, GeometricSymbol) and (self.predicate, self.args) == (other.predicate, other.args)

    def __hash__(self):
        return hash((self.predicate, self.args))

    def distance(self, q: HybridState) -> float:
        raise NotImplementedError

    def gradient(self, q: HybridState) -> np.ndarray:
        raise NotImplementedError

    def holds(self, q: HybridState) -> bool:
        """Independent Boolean test of the predicate (no distance function involved)."""
        raise NotImplementedError


def _clamp_to_box(p: Sequence[float], box: tuple[float, float, float, float]) -> tuple[float, float]:
    x0, y0, x1, y1 = box
    return min(max(p[0], x0), x1), min(max(p[1], y0), y1)


def _box_distance_and_gradient(p: Sequence[float], box) -> tuple[float, np.ndarray]:
    cx, cy = _clamp_to_box(p, box)
    dx, dy = p[0] - cx, p[1] - cy
    d = math.hypot(dx, dy)
    if d == 0.0:
        return 0.0, np.zeros(2)
    return d, np.array([dx / d, dy / d])


class Near(GeometricSymbol):
    """Robot within grasp reach of an ungrasped object.

    ``d(q) = max(0, |p_R - p_o| - (r_R + r_o + reach))``: the reach is measured
    between the robot's and the object's surfaces.
    """

    predicate = "near"

    def _check_args(self):
        if len(self.args) != 1 or self.args[0] not in self.scene.radius_of:
            raise ConfigurationError(f"near expects one known object, got {self.args}")

    def _delta(self, q):
        o = self.args[0]
        p = q.object_poses[o]
        return q.robot_config[0] - p[0], q.robot_config[1] - p[1], self.scene.grasp_radius(o)

    def distance(self, q):
        if q.attached == self.args[0]:
            return math.inf
        dx, dy, rho = self._delta(q)
        return max(0.0, math.hypot(dx, dy) - rho)

    def gradient(self, q):
        dx, dy, rho = self._delta(q)
        n = math.hypot(dx, dy)
        if q.attached == self.args[0] or n <= rho or n == 0.0:
            return np.zeros(2)
        return np.array([dx / n, dy / n])

    def holds(self, q):
        if q.attached == self.args[0]:
            return False
        dx, dy, rho = self._delta(q)
        return dx * dx + dy * dy <= rho * rho


class InRegion(GeometricSymbol):
    """Object footprint fully inside a region; distance of its centre to the shrunk rectangle."""

    predicate = "in_region"

    def _check_args(self):
        if (len(self.args) != 2 or self.args[0] not in self.scene.radius_of
                or self.args[1] not in self.scene.region_by_id):
            raise ConfigurationError(f"in_region expects (object, region), got {self.args}")
        o, r = self.args
        self._box = self.scene.region_by_id[r].rect.shrink(self.scene.radius_of[o])

    def distance(self, q):
        return _box_distance_and_gradient(q.object_poses[self.args[0]], self._box)[0]

    def gradient(self, q):
        if q.attached != self.args[0]:
            return np.zeros(2)
        return _box_distance_and_gradient(q.object_poses[self.args[0]], self._box)[1]

    def holds(self, q):
        o, r = self.args
        rect = self.scene.region_by_id[r].rect
        return rect.contains_disc(q.object_poses[o], self.scene.radius_of[o])


class RobotInRegion(GeometricSymbol):
    """Robot disc fully inside a region."""

    predicate = "robot_in_region"

    def _check_args(self):
        if len(self.args) != 1 or self.args[0] not in self.scene.region_by_id:
            raise ConfigurationError(f"robot_in_region expects one region, got {self.args}")
        self._box = self.scene.region_by_id[self.args[0]].rect.shrink(self.scene.robot_radius)

    def distance(self, q):
        return _box_distance_and_gradient(q.robot_config, self._box)[0]

    def gradient(self, q):
        return _box_distance_and_gradient(q.robot_config, self._box)[1]

    def holds(self, q):
        rect = self.scene.region_by_id[self.args[0]].rect
        return rect.contains_disc(q.robot_config, self.scene.robot_radius)


#: registry of geometric predicates available to problem files: name -> (class, parameter types)
GEOMETRIC_LIBRARY: dict[str, tuple[type[GeometricSymbol], tuple[str, ...]]] = {
    "near": (Near, ("object",)),
    "in_region": (InRegion, ("object", "region")),
    "robot_in_region": (RobotInRegion, ("region",)),
}


def bind_geometric(name: str, scene: Scene, args: Sequence[str], pred_id: int = 0) -> GeometricSymbol:
    try:
        cls, _ = GEOMETRIC_LIBRARY[name]
    except KeyError:
        raise ConfigurationError(f"unknown geometric predicate {name!r}") from None
    return cls(scene, args, pred_id)


@dataclass(frozen=True)
class GeoOr:
    """Disjunction of geometric symbols; projection targets the currently closest member."""

    members: tuple[GeometricSymbol, ...]

    def choose(self, q: HybridState) -> GeometricSymbol:
        return min(self.members, key=lambda s: (s.distance(q), s.pred_id, s.args))

    def distance(self, q):
        return min(s.distance(q) for s in self.members)


GeoTerm = Union[GeometricSymbol, GeoOr]


@dataclass(frozen=True)
class PreconditionFormula:
    """Discrete propositional part plus a conjunction of geometric terms."""

    discrete_part: Formula = TRUE
    geometric_part: tuple[GeoTerm, ...] = ()

    def discrete_holds(self, xi: Sequence[bool]) -> bool:
        return self.discrete_part.evaluate(xi)

    def geometric_distance(self, q: HybridState) -> float:
        return geometric_distance(self, q)

    def holds(self, q: HybridState, eps: float = EPS_SAT) -> bool:
        return self.discrete_holds(q.discrete) and geometric_distance(self, q) <= eps


def geometric_distance(formula: PreconditionFormula, q: HybridState) -> float:
    """Sum of member distances of the geometric conjunction (0 iff all hold)."""
    return sum((t.distance(q) for t in formula.geometric_part), 0.0)


def _resolved_terms(formula: PreconditionFormula, q: HybridState) -> list[GeometricSymbol]:
    return [t.choose(q) if isinstance(t, GeoOr) else t for t in formula.geometric_part]


def _total(terms: Sequence[GeometricSymbol], q: HybridState) -> tuple[float, np.ndarray]:
    d = 0.0
    g = np.zeros(len(q.robot_config))
    for t in terms:
        dt = t.distance(q)
        d += dt
        if dt > 0.0:
            g = g + t.gradient(q)
    return d, g


class FailureReason(enum.Enum):
    NON_CONVERGENCE = "NonConvergence"
    LOCAL_MINIMUM = "LocalMinimum"
    INVALID_STATE = "InvalidState"


class ProjectionFailed(Exception):
    def __init__(self, reason: FailureReason, state: HybridState | None = None, iterations: int = 0):
        super().__init__(reason.value)
        self.reason = reason
        self.state = state
        self.iterations = iterations


def project_to_manifold(formula: PreconditionFormula, seed: HybridState, max_iters: int = MAX_ITERS,
                        tol: float = EPS_SAT,
                        is_valid: Callable[[HybridState], bool] | None = None,
                        stats: dict | None = None) -> HybridState:
    """Move the robot configuration of ``seed`` onto the formula's zero-level set.

    Gradient descent on ``D(q)**2 / 2`` with ``D`` the summed geometric distance,
    backtracking (Armijo, halving) line search. Only the robot configuration
    (and with it any attached object) moves. Raises :class:`ProjectionFailed`.
    """
    terms = _resolved_terms(formula, seed)
    q = seed
    d, g = _total(terms, q)
    it = 0
    while d > tol:
        if it >= max_iters:
            _count(stats, it)
            raise ProjectionFailed(FailureReason.NON_CONVERGENCE, q, it)
        it += 1
        gnorm2 = float(g @ g)
        if gnorm2 < 1e-24:
            _count(stats, it)
            raise ProjectionFailed(FailureReason.LOCAL_MINIMUM, q, it)
        f = 0.5 * d * d
        step = d * g
        slope = d * d * gnorm2
        t = 1.0
        x = np.asarray(q.robot_config, dtype=float)
        while True:
            cand = q.with_config(x - t * step)
            dn, gn = _total(terms, cand)
            if 0.5 * dn * dn <= f - ARMIJO_C * t * slope:
                break
            t *= 0.5
            if t < 1e-12:
                _count(stats, it)
                raise ProjectionFailed(FailureReason.LOCAL_MINIMUM, q, it)
        q, d, g = cand, dn, gn
    _count(stats, it)
    if is_valid is not None and not is_valid(q):
        raise ProjectionFailed(FailureReason.INVALID_STATE, q, it)
    return q


def _count(stats, it):
    if stats is not None:
        stats["iterations"] = stats.get("iterations", 0) + it


def numeric_gradient(sym: GeometricSymbol, q: HybridState, h: float = 1e-6) -> np.ndarray:
    x = np.asarray(q.robot_config, dtype=float)
    out = np.zeros_like(x)
    for i in range(len(x)):
        e = np.zeros_like(x)
        e[i] = h
        out[i] = (sym.distance(q.with_config(x + e)) - sym.distance(q.with_config(x - e))) / (2 * h)
    return out


def check_gradient(pred: GeometricSymbol, q: HybridState, h: float = 1e-6, rtol: float = 1e-4) -> bool:
    """Analytic gradient agrees with central differences (relative error ``rtol``)."""
    if pred.distance(q) <= 0.0:
        raise ValueError("gradient check requires a state off the zero-level set")
    analytic = pred.gradient(q)
    numeric = numeric_gradient(pred, q, h)
    scale = max(float(np.linalg.norm(analytic)), float(np.linalg.norm(numeric)), 1e-12)
    return float(np.linalg.norm(analytic - numeric)) <= rtol * scale


# -- textual atoms ------------------------------------------------------------------------

_ATOM_RE = re.compile(r"^\s*([A-Za-z_][\w\-]*)\s*(?:\(\s*(.*?)\s*\))?\s*$")


def parse_atom(text: str) -> tuple[str, tuple[str, ...]]:
    """``"on(?o, tableA)" -> ("on", ("?o", "tableA"))``; bare names have no arguments."""
    m = _ATOM_RE.match(text)
    if m is None:
        raise ValueError(f"malformed atom {text!r}")
    name, args = m.group(1), m.group(2)
    if not args:
        return name, ()
    return name, tuple(a.strip() for a in args.split(","))


def format_atom(name: str, args: Sequence[str]) -> str:
    return f"{name}({', '.join(args)})" if args else name
