from __future__ import annotations

import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import make_problem, problem_dict
from tmitstar.harness.oracles import discrete_bfs_oracle
from tmitstar.hybridspace import HybridState, PreconditionError
from tmitstar.taskplan import SymbolicDomain
from tmitstar.world2d.generate import (generate_instance, is_occluded, removal_order)
from tmitstar.world2d.problem import (ProblemError, apply_effect, dumps_problem, grounded_action_count,
                                      parse_problem, problem_from_dict, serialize)
from tmitstar.world2d.scene import interpolate, is_valid


def valid_oracle(scene, q) -> bool:
    """Plain-Python disc-versus-box/disc test, one shape at a time."""
    discs = [(q.robot_config, scene.robot_radius)]
    if q.attached is not None:
        discs.append((q.object_poses[q.attached], scene.radius_of[q.attached]))
    b = scene.bounds
    for (x, y), r in discs:
        if x - r < b.x0 or x + r > b.x1 or y - r < b.y0 or y + r > b.y1:
            return False
        for ob in scene.obstacles:
            cx = min(max(x, ob.rect.x0), ob.rect.x1)
            cy = min(max(y, ob.rect.y0), ob.rect.y1)
            if math.hypot(x - cx, y - cy) < r:
                return False
        for o in scene.objects:
            if o.id == q.attached:
                continue
            if math.dist((x, y), q.object_poses[o.id]) < r + o.radius:
                return False
    return True


@pytest.fixture(scope="module")
def clutter3():
    return problem_from_dict(generate_instance("clutter", 3, 0), name="clutter_3")


def test_is_valid_examples(one_object_problem):
    s = one_object_problem.initial_state
    assert is_valid(s, one_object_problem.scene)
    assert not is_valid(s.with_config((2.0, 5.3)), one_object_problem.scene)  # overlaps the object
    assert not is_valid(s.with_config((0.1, 5.0)), one_object_problem.scene)  # leaves the bounds
    assert is_valid(s.with_config((2.0, 5.5)), one_object_problem.scene)  # touching is allowed


def test_collision_checker_agrees_with_plain_oracle(clutter3):
    scene = clutter3.scene
    rng = np.random.default_rng(7)
    s = clutter3.initial_state
    carried = scene.objects[0].id
    disagreements = 0
    for k in range(10_000):
        x, y = rng.uniform(0.0, 10.0, 2)
        if k % 2:
            off = tuple(rng.uniform(-0.9, 0.9, 2))
            poses = dict(s.object_poses)
            poses[carried] = (x + off[0], y + off[1])
            q = HybridState((x, y), poses, s.discrete, carried, off)
        else:
            q = s.with_config((x, y))
        disagreements += is_valid(q, scene) != valid_oracle(scene, q)
    assert disagreements == 0


@settings(max_examples=200, deadline=None)
@given(st.tuples(st.floats(0.3, 9.7), st.floats(0.3, 9.7)), st.tuples(st.floats(0.3, 9.7), st.floats(0.3, 9.7)))
def test_exact_sweep_is_consistent_with_dense_interpolation(a, b):
    p = make_problem(objects=[("o", 0.25, (5.0, 5.0))], regions=[("t", (4.0, 4.0, 6.0, 6.0))],
                     obstacles=[("w1", (2.0, 2.0, 2.5, 8.0)), ("w2", (7.0, 1.0, 9.0, 1.5))], start=(1, 1))
    geo = p.scene.geometry(p.initial_state.object_poses)
    dense = bool(geo.valid(interpolate(a, b, 1e-3)).all())
    if geo.sweep_clear(a, b):
        assert dense
    if not dense:
        assert not geo.sweep_clear(a, b)


def test_apply_effect_and_pick_place_inverse(one_object_problem):
    p = one_object_problem
    pick, place = p.action_by_name("pick(o, left)"), p.action_by_name("place(o, right)")
    q = p.initial_state.with_config((2.0, 4.0))
    held = apply_effect(pick, q)
    assert held.attached == "o" and held.grasp_offset == pytest.approx((0.0, 1.0))
    assert held.discrete[p.symbol_index["holding(o)"]] and not held.discrete[p.symbol_index["handempty"]]
    moved = held.with_config((8.0, 4.0))
    assert moved.object_poses["o"] == pytest.approx((8.0, 5.0))
    placed = apply_effect(place, moved)
    assert placed.attached is None and placed.object_poses["o"] == pytest.approx((8.0, 5.0))
    assert p.is_goal(placed)
    # picking again from the new table restores the holding family
    back = apply_effect(p.action_by_name("pick(o, right)"), placed)
    assert back.discrete == held.discrete
    with pytest.raises(PreconditionError):
        apply_effect(place, q)
    with pytest.raises(PreconditionError):
        apply_effect(pick, p.initial_state)  # out of reach


def test_grounded_action_count(clutter3):
    assert len(clutter3.actions) == grounded_action_count(3, 4) == 24
    assert len({a.name for a in clutter3.actions}) == 24


def test_round_trip_preserves_problem(clutter3):
    text = dumps_problem(clutter3)
    again = parse_problem(text, "clutter_3")
    assert serialize(again) == serialize(clutter3)
    assert again.symbols == clutter3.symbols and again.initial_state == clutter3.initial_state
    assert [a.name for a in again.actions] == [a.name for a in clutter3.actions]


@pytest.mark.parametrize("mutate, where", [
    (lambda d: d.pop("goal"), "goal"),
    (lambda d: d["scene"]["objects"][0].update(radius="big"), "scene.objects[0].radius"),
    (lambda d: d["scene"]["regions"][0].update(rect=[3, 3, 1, 1]), "scene.regions[0].rect"),
    (lambda d: d["actions"][0]["params"].append(["?z", "robot"]), "actions[0].params"),
    (lambda d: d["init"].append("on(ghost, left)"), "init[2]"),
    (lambda d: d.update(extra=1), "extra"),
    (lambda d: d["scene"]["robot"].update(start=[2.0, 5.0]), "scene.robot.start"),
])
def test_parse_errors_name_the_offending_field(mutate, where):
    d = problem_dict(objects=[("o", 0.2, (2.0, 5.0))], regions=[("left", (1.0, 4.0, 3.0, 6.0))],
                     start=(5.0, 2.0))
    mutate(d)
    text = json.dumps(d, indent=2)
    with pytest.raises(ProblemError) as e:
        parse_problem(text)
    assert e.value.path.startswith(where)


def test_invalid_json_reports_line():
    with pytest.raises(ProblemError) as e:
        parse_problem('{\n  "scene": {\n  ,\n}')
    assert e.value.line == 3


@pytest.mark.parametrize("kind, n", [("clutter", 2), ("clutter", 3), ("clutter", 4),
                                     ("shelf", 2), ("shelf", 4), ("shelf", 6)])
def test_generated_instances_are_valid_and_solvable(kind, n):
    for seed in range(3):
        data = generate_instance(kind, n, seed)
        assert data == generate_instance(kind, n, seed)  # deterministic per seed
        p = problem_from_dict(data)
        scene = p.scene
        assert len(scene.objects) == n and p.meta["kind"] == kind
        for i, a in enumerate(scene.objects):
            assert any(r.rect.contains_disc(a.pose, a.radius) for r in scene.regions)
            assert all(ob.rect.distance(a.pose) >= a.radius for ob in scene.obstacles)
            for b in scene.objects[i + 1:]:
                assert math.dist(a.pose, b.pose) >= a.radius + b.radius
        poses = p.initial_state.object_poses
        assert removal_order(scene, poses) is not None
        assert p.meta["occluded"] == {o: is_occluded(scene, o, poses) for o in poses}
        length = discrete_bfs_oracle(SymbolicDomain.from_problem(p))
        assert length is not None and length >= 2


def test_generated_clutter_has_occlusions():
    occluded = [generate_instance("clutter", 4, s)["meta"]["occluded"] for s in range(10)]
    assert sum(any(o.values()) for o in occluded) >= 5


def test_problem_without_objects_is_valid():
    p = make_problem(regions=[("home", (0.0, 0.0, 2.0, 2.0))], start=(5.0, 5.0),
                     geometric_goal=["robot_in_region(home)"])
    assert p.actions == [] and p.initial_state.object_poses == {}


def test_goal_naming_unknown_object_is_rejected():
    d = problem_dict(objects=[("o", 0.2, (2.0, 5.0))], regions=[("left", (1.0, 4.0, 3.0, 6.0))],
                     goal=["on(ghost, left)"], start=(5.0, 2.0))
    with pytest.raises(ProblemError) as e:
        problem_from_dict(d)
    assert e.value.path.startswith("goal.discrete")
