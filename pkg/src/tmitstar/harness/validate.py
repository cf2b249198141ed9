"""Independent solution validator.

Checks a solution path against the problem definition alone, with its own
disc/rectangle geometry and predicate formulas (nothing from the planner's
collision checker or projection code):

1. the first state equals the initial state;
2. every segment stays in one mode and every configuration interpolated at
   half the planner's edge resolution is collision-free;
3. each action's precondition holds at the end of its segment (geometric
   part within ``eps``);
4. applying each action's effect there yields the next segment's first state;
5. the goal holds at the final state.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

from tmitstar.hybridspace import HybridState
from tmitstar.predicates import EPS_SAT, GeoOr
from tmitstar.search.forward import SolutionPath
from tmitstar.world2d.problem import Problem

STATE_TOL = 1e-9  # absolute tolerance for state equality and geometric contact


@dataclass
class Violation:
    condition: int
    segment: int
    message: str


@dataclass
class ValidationReport:
    violations: list[Violation] = field(default_factory=list)

    @property
    def valid(self) -> bool:
        return not self.violations

    def conditions(self) -> set[int]:
        return {v.condition for v in self.violations}

    def __str__(self) -> str:
        if self.valid:
            return "Valid"
        return "Violation\n" + "\n".join(f"  condition {v.condition}, segment {v.segment}: {v.message}"
                                         for v in self.violations)


# -- geometry ---------------------------------------------------------------------------------

def _rect_gap(c, r: float, rect) -> float:
    """Signed clearance between a disc and a rectangle (negative: overlap)."""
    dx = max(rect.x0 - c[0], 0.0, c[0] - rect.x1)
    dy = max(rect.y0 - c[1], 0.0, c[1] - rect.y1)
    return math.hypot(dx, dy) - r


def _inside(c, r: float, rect) -> bool:
    return (c[0] - r >= rect.x0 - STATE_TOL and c[0] + r <= rect.x1 + STATE_TOL
            and c[1] - r >= rect.y0 - STATE_TOL and c[1] + r <= rect.y1 + STATE_TOL)


def collisions(problem: Problem, robot, poses: dict, attached: str | None) -> list[str]:
    """Names of everything the robot (and carried object) overlaps at one configuration."""
    sc = problem.scene
    radius = {o.id: o.radius for o in sc.objects}
    discs = [("robot", robot, sc.robot_radius)]
    if attached is not None:
        discs.append((attached, poses[attached], radius[attached]))
    hits = []
    for name, c, r in discs:
        if not _inside(c, r, sc.bounds):
            hits.append(f"{name} outside bounds")
        for ob in sc.obstacles:
            if _rect_gap(c, r, ob.rect) < -STATE_TOL:
                hits.append(f"{name} overlaps obstacle {ob.id}")
        for o, p in poses.items():
            if o == attached:
                continue
            if math.dist(c, p) < r + radius[o] - STATE_TOL:
                hits.append(f"{name} overlaps object {o}")
    return hits


def _samples(a, b, step: float):
    n = max(int(math.ceil(math.dist(a, b) / step)), 1)
    for k in range(n + 1):
        t = k / n
        yield (a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1]))


# -- predicates -------------------------------------------------------------------------------

def symbol_distance(problem: Problem, name: str, args, q: HybridState) -> float:
    sc = problem.scene
    radius = {o.id: o.radius for o in sc.objects}
    regions = {r.id: r.rect for r in sc.regions}
    if name == "near":
        (o,) = args
        if q.attached == o:
            return math.inf
        return max(0.0, math.dist(q.robot_config, q.object_poses[o]) - (sc.robot_radius + radius[o] + sc.reach))
    if name == "in_region":
        o, reg = args
        return _box_distance(q.object_poses[o], radius[o], regions[reg])
    if name == "robot_in_region":
        (reg,) = args
        return _box_distance(q.robot_config, sc.robot_radius, regions[reg])
    raise ValueError(f"validator has no formula for predicate {name!r}")


def _box_distance(c, r: float, rect) -> float:
    """Distance of a disc centre to the set of centres that keep the disc inside ``rect``."""
    x0, x1 = rect.x0 + r, rect.x1 - r
    y0, y1 = rect.y0 + r, rect.y1 - r
    if x0 > x1:
        x0 = x1 = (rect.x0 + rect.x1) / 2
    if y0 > y1:
        y0 = y1 = (rect.y0 + rect.y1) / 2
    return math.hypot(max(x0 - c[0], 0.0, c[0] - x1), max(y0 - c[1], 0.0, c[1] - y1))


def formula_distance(problem: Problem, formula, q: HybridState) -> float:
    total = 0.0
    for term in formula.geometric_part:
        members = term.members if isinstance(term, GeoOr) else (term,)
        total += min(symbol_distance(problem, m.predicate, m.args, q) for m in members)
    return total


def formula_holds(problem: Problem, formula, q: HybridState, eps: float) -> tuple[bool, str]:
    if not formula.discrete_part.evaluate(q.discrete):
        return False, "discrete part false"
    d = formula_distance(problem, formula, q)
    if not d <= eps:
        return False, f"geometric distance {d:.3g} > {eps:g}"
    return True, ""


def expected_effect(problem: Problem, action, q: HybridState) -> HybridState:
    xi = list(q.discrete)
    for i in action.delete:
        xi[i] = False
    for i in action.add:
        xi[i] = True
    attached, offset = q.attached, q.grasp_offset
    if action.attach is not None:
        p = q.object_poses[action.attach]
        attached = action.attach
        offset = (p[0] - q.robot_config[0], p[1] - q.robot_config[1])
    if action.detach is not None:
        attached, offset = None, None
    return HybridState(q.robot_config, dict(q.object_poses), tuple(xi), attached, offset)


def _close(a, b) -> bool:
    return len(a) == len(b) and all(abs(x - y) <= STATE_TOL for x, y in zip(a, b))


def state_difference(a: HybridState, b: HybridState) -> str | None:
    if not _close(a.robot_config, b.robot_config):
        return f"robot {a.robot_config} != {b.robot_config}"
    if set(a.object_poses) != set(b.object_poses):
        return "different object sets"
    for o in a.object_poses:
        if not _close(a.object_poses[o], b.object_poses[o]):
            return f"pose of {o} {a.object_poses[o]} != {b.object_poses[o]}"
    if tuple(a.discrete) != tuple(b.discrete):
        return "discrete state differs"
    if a.attached != b.attached:
        return f"attached {a.attached} != {b.attached}"
    if (a.grasp_offset is None) != (b.grasp_offset is None) or (
            a.grasp_offset is not None and not _close(a.grasp_offset, b.grasp_offset)):
        return "grasp offset differs"
    return None


# -- the check --------------------------------------------------------------------------------

def validate_solution(plan: SolutionPath, problem: Problem, eps: float = EPS_SAT,
                      resolution: float | None = None) -> ValidationReport:
    """Check conditions 1-5 above; returns every violation found."""
    report = ValidationReport()
    bad = report.violations.append
    segs = plan.segments
    if not segs or not segs[0].states:
        bad(Violation(1, 0, "empty plan"))
        return report
    sc = problem.scene
    lam = min(0.5 * min((o.radius for o in sc.objects), default=math.inf), 0.25 * sc.robot_radius)
    step = (resolution if resolution is not None else lam) / 2

    diff = state_difference(segs[0].states[0], problem.initial_state)
    if diff is not None:
        bad(Violation(1, 0, f"does not start at the initial state: {diff}"))

    for i, seg in enumerate(segs):
        if not seg.states:
            bad(Violation(2, i, "segment without states"))
            continue
        first = seg.states[0]
        for q in seg.states:
            if tuple(q.discrete) != tuple(first.discrete) or q.attached != first.attached:
                bad(Violation(2, i, "segment leaves its mode"))
                break
            if any(not _close(q.object_poses[o], first.object_poses[o])
                   for o in first.object_poses if o != first.attached):
                bad(Violation(2, i, "ungrasped object moved within a segment"))
                break
            if first.attached is not None:
                off = first.grasp_offset
                p = q.object_poses[first.attached]
                if off is None or not _close(p, (q.robot_config[0] + off[0], q.robot_config[1] + off[1])):
                    bad(Violation(2, i, "attached object is not rigidly carried"))
                    break
        else:
            off = first.grasp_offset
            poses = dict(first.object_poses)
            for a, b in zip(seg.states, seg.states[1:] or seg.states):
                hit = None
                for c in _samples(a.robot_config, b.robot_config, step):
                    if first.attached is not None:
                        poses[first.attached] = (c[0] + off[0], c[1] + off[1])
                    hits = collisions(problem, c, poses, first.attached)
                    if hits:
                        hit = (c, hits)
                        break
                if hit is not None:
                    bad(Violation(2, i, f"collision at {hit[0]}: {', '.join(hit[1])}"))
                    break

        if seg.action is None:
            if i != len(segs) - 1:
                bad(Violation(4, i, "null action before the last segment"))
            continue
        end = seg.states[-1]
        ok, why = formula_holds(problem, seg.action.precondition, end, eps)
        if ok and seg.action.attach is not None and (end.attached is not None or
                                                     seg.action.attach not in end.object_poses):
            ok, why = False, "hand not free for the grasp"
        if ok and seg.action.detach is not None and end.attached != seg.action.detach:
            ok, why = False, f"not holding {seg.action.detach}"
        if not ok:
            bad(Violation(3, i, f"precondition of {seg.action.name}: {why}"))
        if i + 1 >= len(segs) or not segs[i + 1].states:
            bad(Violation(4, i, f"no segment follows {seg.action.name}"))
            continue
        diff = state_difference(expected_effect(problem, seg.action, end), segs[i + 1].states[0])
        if diff is not None:
            bad(Violation(4, i, f"effect of {seg.action.name} does not match the next start: {diff}"))

    final = segs[-1].states[-1] if segs[-1].states else None
    if final is None:
        bad(Violation(5, len(segs) - 1, "no final state"))
    else:
        ok, why = formula_holds(problem, problem.goal, final, eps)
        if not ok:
            bad(Violation(5, len(segs) - 1, f"goal does not hold: {why}"))
    return report
