from __future__ import annotations

import pytest

from tmitstar.world2d.problem import pick_place_domain, problem_from_dict


def problem_dict(objects=(), regions=(), obstacles=(), goal=(), start=(1.0, 1.0),
                 bounds=(0.0, 0.0, 10.0, 10.0), robot_radius=0.3, reach=0.5, init=None,
                 geometric_goal=(), name="test"):
    """A pick/place problem; ``objects`` are (id, radius, (x, y)), regions/obstacles (id, rect)."""
    preds, actions = pick_place_domain()
    objs = [{"id": o, "radius": r, "pose": list(p), "color": "green"} for o, r, p in objects]
    regs = [{"id": rid, "rect": list(rect), "color": "tan"} for rid, rect in regions]
    if init is None:
        init = ["handempty"]
        for o, r, p in objects:
            for rid, (x0, y0, x1, y1) in regions:
                if x0 <= p[0] - r and p[0] + r <= x1 and y0 <= p[1] - r and p[1] + r <= y1:
                    init.append(f"on({o}, {rid})")
                    break
    return {
        "name": name,
        "scene": {"bounds": list(bounds),
                  "robot": {"radius": robot_radius, "reach": reach, "start": list(start)},
                  "objects": objs, "regions": regs,
                  "obstacles": [{"id": oid, "rect": list(rect)} for oid, rect in obstacles]},
        "predicates": preds,
        "actions": actions,
        "init": list(init),
        "goal": {"discrete": {"and": list(goal)}, "geometric": list(geometric_goal)},
    }


def make_problem(**kw):
    return problem_from_dict(problem_dict(**kw))


@pytest.fixture
def one_object_problem():
    """One disc on a table at the left, to be moved to a table at the right of an empty room."""
    return make_problem(objects=[("o", 0.2, (2.0, 5.0))],
                        regions=[("left", (1.0, 4.0, 3.0, 6.0)), ("right", (7.0, 4.0, 9.0, 6.0))],
                        goal=["on(o, right)"], start=(5.0, 2.0))


@pytest.fixture
def empty_scene_problem():
    """No objects; the goal is to drive the robot into a corner region."""
    return make_problem(regions=[("corner", (8.5, 8.5, 9.5, 9.5))], start=(1.0, 1.0),
                        geometric_goal=["robot_in_region(corner)"])


def random_domain(rng, n_symbols=6, n_actions=8, goal_size=2):
    """A random STRIPS-like discrete domain with conjunctive preconditions and goal."""
    from tmitstar.predicates import And, Atom, Not
    from tmitstar.taskplan import SymbolicAction, SymbolicDomain

    acts = []
    for i in range(n_actions):
        k = int(rng.integers(0, 3))
        pre_idx = rng.choice(n_symbols, size=k, replace=False)
        pre = And(tuple(Atom(int(s)) if rng.random() < 0.8 else Not(Atom(int(s))) for s in pre_idx))
        add = frozenset(int(s) for s in rng.choice(n_symbols, size=int(rng.integers(1, 3)), replace=False))
        rest = [s for s in range(n_symbols) if s not in add]
        dele = frozenset(int(s) for s in rng.choice(rest, size=int(rng.integers(0, 2)), replace=False))
        acts.append(SymbolicAction(i, f"a{i}", pre, add, dele))
    initial = tuple(bool(b) for b in rng.random(n_symbols) < 0.3)
    goal_idx = rng.choice(n_symbols, size=goal_size, replace=False)
    goal = And(tuple(Atom(int(s)) for s in goal_idx))
    return SymbolicDomain(tuple(f"p{i}" for i in range(n_symbols)), tuple(acts), initial, goal)
