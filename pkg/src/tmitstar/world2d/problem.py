"""Problem files: parsing, validation, grounding, effects and serialization.

A problem file is JSON with top-level keys ``scene``, ``predicates``,
``actions``, ``init`` and ``goal``; the full schema is documented in
``docs/schema.md``. Parsing grounds every action schema over the scene's
objects and regions, so the rest of the planner only sees ground actions.
"""
from __future__ import annotations

import itertools
import json
from pathlib import Path
from dataclasses import dataclass, field
from typing import Any, Sequence

from tmitstar.hybridspace import HybridState, PreconditionError
from tmitstar.predicates import (EPS_SAT, GEOMETRIC_LIBRARY, TRUE, And, Atom, ConfigurationError,
                                 Formula, GeoOr, GeometricSymbol, Not, Or, PreconditionFormula,
                                 bind_geometric, format_atom, geometric_distance, parse_atom)
from tmitstar.world2d.scene import Obstacle, ObjectSpec, Rect, Region, Scene, is_valid

TYPES = ("object", "region")


class ProblemError(ValueError):
    """Schema or consistency violation, located by JSON path and (when known) line."""

    def __init__(self, path: str, message: str, line: int | None = None):
        loc = f"{path or '<root>'}" + (f" (line {line})" if line is not None else "")
        super().__init__(f"{loc}: {message}")
        self.path = path
        self.line = line
        self.detail = message


@dataclass(frozen=True)
class PredicateDecl:
    name: str
    params: tuple[str, ...]
    kind: str  # "discrete" | "geometric"


@dataclass(frozen=True)
class ActionSchema:
    name: str
    params: tuple[tuple[str, str], ...]
    pre_discrete: Any
    pre_geometric: tuple[Any, ...]
    add: tuple[str, ...]
    delete: tuple[str, ...]
    attach: str | None = None
    detach: str | None = None


@dataclass(eq=False)
class GroundAction:
    """A fully bound action: discrete/geometric precondition and deterministic effect."""

    id: int
    name: str
    schema: str
    args: tuple[str, ...]
    precondition: PreconditionFormula
    add: frozenset[int]
    delete: frozenset[int]
    attach: str | None = None
    detach: str | None = None

    def discrete_applicable(self, xi: Sequence[bool]) -> bool:
        return self.precondition.discrete_holds(xi)

    def apply_discrete(self, xi: Sequence[bool]) -> tuple[bool, ...]:
        out = list(xi)
        for i in self.delete:
            out[i] = False
        for i in self.add:  # add wins over delete
            out[i] = True
        return tuple(out)

    def is_satisfied(self, q: HybridState, eps: float = EPS_SAT) -> bool:
        if not self.precondition.discrete_holds(q.discrete):
            return False
        if self.attach is not None and (q.attached is not None or self.attach not in q.object_poses):
            return False
        if self.detach is not None and q.attached != self.detach:
            return False
        return geometric_distance(self.precondition, q) <= eps

    def apply(self, q: HybridState) -> HybridState:
        return apply_effect(self, q)

    def __repr__(self) -> str:
        return self.name


def apply_effect(action: GroundAction, q: HybridState, eps: float = EPS_SAT) -> HybridState:
    """Apply add/delete lists and attach/detach; robot configuration is unchanged."""
    if action.id < 0:
        return q
    if not action.precondition.discrete_holds(q.discrete):
        raise PreconditionError(f"{action.name}: discrete precondition false")
    for term in action.precondition.geometric_part:
        if term.distance(q) > eps:
            raise PreconditionError(f"{action.name}: geometric precondition {term!r} unsatisfied")
    poses = dict(q.object_poses)
    attached, offset = q.attached, q.grasp_offset
    if action.attach is not None:
        if q.attached is not None:
            raise PreconditionError(f"{action.name}: already holding {q.attached}")
        p = poses[action.attach]
        attached = action.attach
        offset = (p[0] - q.robot_config[0], p[1] - q.robot_config[1])
    if action.detach is not None:
        if q.attached != action.detach:
            raise PreconditionError(f"{action.name}: not holding {action.detach}")
        attached, offset = None, None
    return HybridState(q.robot_config, poses, action.apply_discrete(q.discrete), attached, offset)


@dataclass
class Problem:
    scene: Scene
    predicates: tuple[PredicateDecl, ...]
    schemas: tuple[ActionSchema, ...]
    init: tuple[str, ...]
    goal_discrete: Any
    goal_geometric: tuple[Any, ...]
    symbols: tuple[str, ...]
    actions: list[GroundAction]
    goal: PreconditionFormula
    initial_state: HybridState
    name: str = "problem"
    meta: dict = field(default_factory=dict)

    @property
    def symbol_index(self) -> dict[str, int]:
        return {s: i for i, s in enumerate(self.symbols)}

    @property
    def initial_discrete(self) -> tuple[bool, ...]:
        return self.initial_state.discrete

    def is_goal(self, q: HybridState, eps: float = EPS_SAT) -> bool:
        return self.goal.holds(q, eps)

    def action_by_name(self, name: str) -> GroundAction:
        for a in self.actions:
            if a.name == name:
                return a
        raise KeyError(name)

    def to_dict(self) -> dict:
        return serialize(self)


# -- parsing -----------------------------------------------------------------------------


def _line_of(text: str | None, path: str) -> int | None:
    """Best-effort line of the last key in ``path``."""
    if not text:
        return None
    key = path.rsplit(".", 1)[-1].split("[", 1)[0]
    if not key:
        return None
    pos = text.find(f'"{key}"')
    return None if pos < 0 else text.count("\n", 0, pos) + 1


class _Parser:
    def __init__(self, text: str | None):
        self.text = text

    def fail(self, path: str, msg: str):
        raise ProblemError(path, msg, _line_of(self.text, path))

    def get(self, obj: Any, key: str, path: str, kind: type | tuple = object, default: Any = ...):
        if not isinstance(obj, dict):
            self.fail(path, "expected an object")
        if key not in obj:
            if default is not ...:
                return default
            self.fail(f"{path}.{key}" if path else key, "missing required field")
        val = obj[key]
        if kind is float:
            kind = (int, float)
        if not isinstance(val, kind) or isinstance(val, bool) and kind != bool:
            self.fail(f"{path}.{key}" if path else key, f"wrong type {type(val).__name__}")
        return val

    def number(self, v: Any, path: str) -> float:
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            self.fail(path, "expected a number")
        return float(v)

    def rect(self, v: Any, path: str) -> Rect:
        if not isinstance(v, list) or len(v) != 4:
            self.fail(path, "expected [x0, y0, x1, y1]")
        vals = [self.number(x, f"{path}[{i}]") for i, x in enumerate(v)]
        try:
            return Rect(*vals)
        except ValueError as e:
            self.fail(path, str(e))

    def pose(self, v: Any, path: str) -> tuple[float, float]:
        if not isinstance(v, list) or len(v) != 2:
            self.fail(path, "expected [x, y]")
        return (self.number(v[0], f"{path}[0]"), self.number(v[1], f"{path}[1]"))

    # scene --------------------------------------------------------------------
    def scene(self, d: Any) -> Scene:
        p = "scene"
        bounds = self.rect(self.get(d, "bounds", p), f"{p}.bounds")
        robot = self.get(d, "robot", p, dict)
        radius = self.number(self.get(robot, "radius", f"{p}.robot"), f"{p}.robot.radius")
        reach = self.number(self.get(robot, "reach", f"{p}.robot"), f"{p}.robot.reach")
        start = self.pose(self.get(robot, "start", f"{p}.robot"), f"{p}.robot.start")
        if radius <= 0:
            self.fail(f"{p}.robot.radius", "must be positive")
        if reach <= 0:
            self.fail(f"{p}.robot.reach", "must be positive")
        ids: set[str] = set()
        objects = []
        for i, o in enumerate(self.get(d, "objects", p, list, [])):
            op = f"{p}.objects[{i}]"
            oid = self.get(o, "id", op, str)
            if oid in ids:
                self.fail(f"{op}.id", f"duplicate id {oid!r}")
            ids.add(oid)
            r = self.number(self.get(o, "radius", op), f"{op}.radius")
            if r <= 0:
                self.fail(f"{op}.radius", "must be positive")
            objects.append(ObjectSpec(oid, r, self.pose(self.get(o, "pose", op), f"{op}.pose"),
                                      self.get(o, "color", op, str, "gray")))
        regions = []
        for i, r in enumerate(self.get(d, "regions", p, list, [])):
            rp = f"{p}.regions[{i}]"
            rid = self.get(r, "id", rp, str)
            if rid in ids:
                self.fail(f"{rp}.id", f"duplicate id {rid!r}")
            ids.add(rid)
            regions.append(Region(rid, self.rect(self.get(r, "rect", rp), f"{rp}.rect"),
                                  self.get(r, "color", rp, str, "none")))
        obstacles = []
        for i, ob in enumerate(self.get(d, "obstacles", p, list, [])):
            bp = f"{p}.obstacles[{i}]"
            obstacles.append(Obstacle(self.get(ob, "id", bp, str, f"wall{i}"),
                                      self.rect(self.get(ob, "rect", bp), f"{bp}.rect")))
        scene = Scene(bounds, radius, reach, start, tuple(objects), tuple(regions), tuple(obstacles))
        for i, o in enumerate(objects):
            if not any(rg.rect.contains_disc(o.pose, o.radius) for rg in regions):
                self.fail(f"{p}.objects[{i}].pose", f"object {o.id!r} lies in no region")
        return scene

    # predicates ----------------------------------------------------------------
    def predicates(self, d: Any) -> tuple[PredicateDecl, ...]:
        if not isinstance(d, list):
            self.fail("predicates", "expected a list")
        out = []
        seen = set()
        for i, e in enumerate(d):
            pp = f"predicates[{i}]"
            name = self.get(e, "name", pp, str)
            params = self.get(e, "params", pp, list, [])
            kind = self.get(e, "kind", pp, str)
            if name in seen:
                self.fail(f"{pp}.name", f"duplicate predicate {name!r}")
            seen.add(name)
            for j, t in enumerate(params):
                if t not in TYPES:
                    self.fail(f"{pp}.params[{j}]", f"unknown type {t!r}")
            if kind not in ("discrete", "geometric"):
                self.fail(f"{pp}.kind", "kind must be 'discrete' or 'geometric'")
            if kind == "geometric":
                if name not in GEOMETRIC_LIBRARY:
                    self.fail(f"{pp}.name", f"unknown geometric predicate {name!r}; "
                              f"available: {sorted(GEOMETRIC_LIBRARY)}")
                expected = GEOMETRIC_LIBRARY[name][1]
                if tuple(params) != expected:
                    self.fail(f"{pp}.params", f"{name} takes {list(expected)}")
            out.append(PredicateDecl(name, tuple(params), kind))
        return tuple(out)

    # actions --------------------------------------------------------------------
    def schemas(self, d: Any) -> tuple[ActionSchema, ...]:
        if not isinstance(d, list):
            self.fail("actions", "expected a list")
        out = []
        for i, a in enumerate(d):
            ap = f"actions[{i}]"
            name = self.get(a, "name", ap, str)
            params = []
            for j, prm in enumerate(self.get(a, "params", ap, list, [])):
                if (not isinstance(prm, list) or len(prm) != 2 or not isinstance(prm[0], str)
                        or not prm[0].startswith("?") or prm[1] not in TYPES):
                    self.fail(f"{ap}.params[{j}]", 'expected ["?var", "object"|"region"]')
                params.append((prm[0], prm[1]))
            pre = self.get(a, "precondition", ap, dict, {})
            eff = self.get(a, "effect", ap, dict, {})
            cont = self.get(eff, "continuous", f"{ap}.effect", dict, {})
            attach = self.get(cont, "attach", f"{ap}.effect.continuous", str, None)
            detach = self.get(cont, "detach", f"{ap}.effect.continuous", str, None)
            if attach is not None and detach is not None:
                self.fail(f"{ap}.effect.continuous", "cannot both attach and detach")
            out.append(ActionSchema(
                name, tuple(params), pre.get("discrete", {"and": []}),
                tuple(self.get(pre, "geometric", f"{ap}.precondition", list, [])),
                tuple(self.get(eff, "add", f"{ap}.effect", list, [])),
                tuple(self.get(eff, "delete", f"{ap}.effect", list, [])), attach, detach))
        return tuple(out)


class _Grounder:
    def __init__(self, parser: _Parser, scene: Scene, preds: tuple[PredicateDecl, ...]):
        self.p = parser
        self.scene = scene
        self.preds = {d.name: d for d in preds}
        self.objects = scene.object_ids
        self.regions = tuple(r.id for r in scene.regions)
        self.symbols: list[str] = []
        for d in preds:
            if d.kind != "discrete":
                continue
            for args in itertools.product(*(self._domain(t) for t in d.params)):
                self.symbols.append(format_atom(d.name, args))
        self.index = {s: i for i, s in enumerate(self.symbols)}
        self._geo_ids = {d.name: i for i, d in enumerate(preds)}

    def _domain(self, t: str) -> tuple[str, ...]:
        return self.objects if t == "object" else self.regions

    def _bind(self, text: Any, binding: dict[str, tuple[str, str]], path: str,
              kind: str) -> tuple[str, tuple[str, ...]]:
        if not isinstance(text, str):
            self.p.fail(path, "expected an atom string")
        try:
            name, args = parse_atom(text)
        except ValueError as e:
            self.p.fail(path, str(e))
        decl = self.preds.get(name)
        if decl is None:
            self.p.fail(path, f"unknown predicate {name!r}")
        if decl.kind != kind:
            self.p.fail(path, f"{name!r} is {decl.kind}, not allowed here")
        if len(args) != len(decl.params):
            self.p.fail(path, f"{name} takes {len(decl.params)} argument(s)")
        out = []
        for a, t in zip(args, decl.params):
            if a.startswith("?"):
                if a not in binding:
                    self.p.fail(path, f"unbound variable {a}")
                val, vt = binding[a]
                if vt != t:
                    self.p.fail(path, f"{a} has type {vt}, expected {t}")
                out.append(val)
            else:
                if a not in self._domain(t):
                    self.p.fail(path, f"unknown {t} {a!r}")
                out.append(a)
        return name, tuple(out)

    def discrete(self, f: Any, binding, path: str) -> Formula:
        if isinstance(f, str):
            name, args = self._bind(f, binding, path, "discrete")
            return Atom(self.index[format_atom(name, args)])
        if isinstance(f, dict) and len(f) == 1:
            (op, val), = f.items()
            if op == "not":
                return Not(self.discrete(val, binding, f"{path}.not"))
            if op in ("and", "or") and isinstance(val, list):
                items = tuple(self.discrete(x, binding, f"{path}.{op}[{i}]") for i, x in enumerate(val))
                return And(items) if op == "and" else Or(items)
        self.p.fail(path, 'expected an atom string or {"and"|"or": [...]} / {"not": ...}')

    def geometric(self, terms: Sequence[Any], binding, path: str) -> tuple:
        out = []
        for i, t in enumerate(terms):
            tp = f"{path}[{i}]"
            if isinstance(t, dict) and set(t) == {"or"} and isinstance(t["or"], list) and t["or"]:
                out.append(GeoOr(tuple(self._geo_symbol(x, binding, f"{tp}.or[{j}]")
                                       for j, x in enumerate(t["or"]))))
            elif isinstance(t, dict) and "not" in t:
                self.p.fail(tp, "negated geometric predicates are not supported")
            else:
                out.append(self._geo_symbol(t, binding, tp))
        return tuple(out)

    def _geo_symbol(self, text, binding, path) -> GeometricSymbol:
        if isinstance(text, dict) and "not" in text:
            self.p.fail(path, "negated geometric predicates are not supported")
        name, args = self._bind(text, binding, path, "geometric")
        try:
            return bind_geometric(name, self.scene, args, self._geo_ids[name])
        except ConfigurationError as e:
            self.p.fail(path, str(e))

    def ground_actions(self, schemas: Sequence[ActionSchema]) -> list[GroundAction]:
        actions: list[GroundAction] = []
        for si, s in enumerate(schemas):
            ap = f"actions[{si}]"
            domains = [self._domain(t) for _, t in s.params]
            for values in itertools.product(*domains):
                binding = {v: (val, t) for (v, t), val in zip(s.params, values)}
                disc = self.discrete(s.pre_discrete, binding, f"{ap}.precondition.discrete")
                geo = self.geometric(s.pre_geometric, binding, f"{ap}.precondition.geometric")
                add = frozenset(self._effect_atoms(s.add, binding, f"{ap}.effect.add"))
                delete = frozenset(self._effect_atoms(s.delete, binding, f"{ap}.effect.delete"))
                attach = self._object_ref(s.attach, binding, f"{ap}.effect.continuous.attach")
                detach = self._object_ref(s.detach, binding, f"{ap}.effect.continuous.detach")
                actions.append(GroundAction(len(actions), format_atom(s.name, values), s.name,
                                            tuple(values), PreconditionFormula(disc, geo), add,
                                            delete, attach, detach))
        return actions

    def _effect_atoms(self, atoms, binding, path):
        for i, a in enumerate(atoms):
            name, args = self._bind(a, binding, f"{path}[{i}]", "discrete")
            yield self.index[format_atom(name, args)]

    def _object_ref(self, ref, binding, path):
        if ref is None:
            return None
        if ref.startswith("?"):
            if ref not in binding or binding[ref][1] != "object":
                self.p.fail(path, f"{ref} is not an object parameter")
            return binding[ref][0]
        if ref not in self.objects:
            self.p.fail(path, f"unknown object {ref!r}")
        return ref


def problem_from_dict(data: Any, text: str | None = None, name: str = "problem") -> Problem:
    p = _Parser(text)
    if not isinstance(data, dict):
        p.fail("", "top level must be an object")
    for key in ("scene", "predicates", "actions", "init", "goal"):
        if key not in data:
            p.fail(key, "missing required top-level field")
    unknown = set(data) - {"scene", "predicates", "actions", "init", "goal", "name", "meta"}
    if unknown:
        p.fail(sorted(unknown)[0], "unknown top-level field")
    scene = p.scene(data["scene"])
    preds = p.predicates(data["predicates"])
    schemas = p.schemas(data["actions"])
    g = _Grounder(p, scene, preds)
    actions = g.ground_actions(schemas)

    init = data["init"]
    if not isinstance(init, list):
        p.fail("init", "expected a list of atoms")
    xi = [False] * len(g.symbols)
    for i, a in enumerate(init):
        name, args = g._bind(a, {}, f"init[{i}]", "discrete")
        xi[g.index[format_atom(name, args)]] = True

    goal = data["goal"]
    if not isinstance(goal, dict):
        p.fail("goal", "expected an object with 'discrete' and/or 'geometric'")
    gd = goal.get("discrete", {"and": []})
    gg = goal.get("geometric", [])
    if not isinstance(gg, list):
        p.fail("goal.geometric", "expected a list")
    goal_formula = PreconditionFormula(g.discrete(gd, {}, "goal.discrete"),
                                       g.geometric(gg, {}, "goal.geometric"))

    poses = {o.id: o.pose for o in scene.objects}
    q0 = HybridState(tuple(scene.start), poses, tuple(xi))
    if not is_valid(q0, scene):
        p.fail("scene.robot.start", "initial configuration is in collision")
    return Problem(scene, preds, schemas, tuple(init), gd, tuple(gg), tuple(g.symbols), actions,
                   goal_formula, q0, str(data.get("name", name)), dict(data.get("meta", {})))


def parse_problem(text: str, name: str = "problem") -> Problem:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise ProblemError("", f"invalid JSON: {e.msg}", e.lineno) from None
    return problem_from_dict(data, text, name)


def load_problem(path) -> Problem:
    path = Path(path)
    return parse_problem(path.read_text(encoding="utf-8"), path.stem)


# -- serialization -------------------------------------------------------------------------


def scene_to_dict(scene: Scene) -> dict:
    return {
        "bounds": scene.bounds.as_list(),
        "robot": {"radius": scene.robot_radius, "reach": scene.reach, "start": list(scene.start)},
        "objects": [{"id": o.id, "radius": o.radius, "pose": list(o.pose), "color": o.color}
                    for o in scene.objects],
        "regions": [{"id": r.id, "rect": r.rect.as_list(), "color": r.color} for r in scene.regions],
        "obstacles": [{"id": o.id, "rect": o.rect.as_list()} for o in scene.obstacles],
    }


def serialize(problem: Problem) -> dict:
    actions = []
    for s in problem.schemas:
        cont = {}
        if s.attach is not None:
            cont["attach"] = s.attach
        if s.detach is not None:
            cont["detach"] = s.detach
        actions.append({
            "name": s.name,
            "params": [list(p) for p in s.params],
            "precondition": {"discrete": s.pre_discrete, "geometric": list(s.pre_geometric)},
            "effect": {"add": list(s.add), "delete": list(s.delete), "continuous": cont},
        })
    out = {
        "name": problem.name,
        "scene": scene_to_dict(problem.scene),
        "predicates": [{"name": d.name, "params": list(d.params), "kind": d.kind}
                       for d in problem.predicates],
        "actions": actions,
        "init": list(problem.init),
        "goal": {"discrete": problem.goal_discrete, "geometric": list(problem.goal_geometric)},
    }
    if problem.meta:
        out["meta"] = problem.meta
    return out


def dumps_problem(problem: Problem | dict) -> str:
    data = serialize(problem) if isinstance(problem, Problem) else problem
    return json.dumps(data, indent=2) + "\n"


# -- the standard pick/place domain --------------------------------------------------------


def pick_place_domain() -> tuple[list[dict], list[dict]]:
    """Predicate declarations and action schemas shared by the generated benchmarks."""
    predicates = [
        {"name": "handempty", "params": [], "kind": "discrete"},
        {"name": "holding", "params": ["object"], "kind": "discrete"},
        {"name": "on", "params": ["object", "region"], "kind": "discrete"},
        {"name": "near", "params": ["object"], "kind": "geometric"},
        {"name": "in_region", "params": ["object", "region"], "kind": "geometric"},
        {"name": "robot_in_region", "params": ["region"], "kind": "geometric"},
    ]
    actions = [
        {"name": "pick", "params": [["?o", "object"], ["?r", "region"]],
         "precondition": {"discrete": {"and": ["handempty", "on(?o, ?r)"]},
                          "geometric": ["near(?o)"]},
         "effect": {"add": ["holding(?o)"], "delete": ["handempty", "on(?o, ?r)"],
                    "continuous": {"attach": "?o"}}},
        {"name": "place", "params": [["?o", "object"], ["?r", "region"]],
         "precondition": {"discrete": "holding(?o)", "geometric": ["in_region(?o, ?r)"]},
         "effect": {"add": ["on(?o, ?r)", "handempty"], "delete": ["holding(?o)"],
                    "continuous": {"detach": "?o"}}},
    ]
    return predicates, actions


def grounded_action_count(n_objects: int, n_regions: int) -> int:
    """Ground actions of :func:`pick_place_domain`: one pick and one place per (object, region)."""
    return 2 * n_objects * n_regions
