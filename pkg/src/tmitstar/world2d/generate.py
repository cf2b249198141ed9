"""Seeded generators for the clutter-clearing and shelf-rearrangement benchmarks.

Both generators emit problem dictionaries in the file schema using the shared
pick/place domain. Occlusion is purely geometric: an object is *occluded*
when no robot configuration within grasp reach of it is collision-free.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from tmitstar.world2d.problem import pick_place_domain, problem_from_dict
from tmitstar.world2d.scene import Obstacle, ObjectSpec, Rect, Region, Scene

MAX_PLACEMENT_ATTEMPTS = 10_000
ROBOT_RADIUS = 0.3
REACH = 0.5
RADIUS_RANGE = (0.15, 0.25)


class GenerationError(RuntimeError):
    pass


@dataclass(frozen=True)
class GeneratorConfig:
    bounds: tuple[float, float, float, float] = (0.0, 0.0, 10.0, 10.0)
    robot_radius: float = ROBOT_RADIUS
    reach: float = REACH
    radius_range: tuple[float, float] = RADIUS_RANGE
    # clutter: chance that a table's first object sits at the back of its slot
    slot_probability: float = 0.5
    # clutter: chance that a later object is dropped into an occupied slot's mouth
    pack_probability: float = 0.6


def _rng(kind: str, seed: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed), sum(map(ord, kind))]))


def grasp_candidates(scene: Scene, obj_id: str, poses: dict[str, tuple[float, float]],
                     n_angles: int = 180, n_rings: int = 6) -> np.ndarray:
    """Collision-free robot configurations within grasp reach of ``obj_id`` (dense polar grid)."""
    c = np.asarray(poses[obj_id], dtype=float)
    r_o = scene.radius_of[obj_id]
    lo = scene.robot_radius + r_o
    hi = scene.grasp_radius(obj_id)
    rings = np.linspace(lo, hi, n_rings)
    ang = np.linspace(0.0, 2 * math.pi, n_angles, endpoint=False)
    rr, aa = np.meshgrid(rings, ang)
    pts = np.stack([c[0] + rr.ravel() * np.cos(aa.ravel()), c[1] + rr.ravel() * np.sin(aa.ravel())], 1)
    others = {o: p for o, p in poses.items() if o != obj_id}
    geo = scene.geometry(others)
    # the object itself is touched at the inner ring, never overlapped
    return pts[geo.valid(pts)]


def reachable_mask(scene: Scene, poses: dict[str, tuple[float, float]], step: float = 0.05):
    """Grid of free robot cells connected to the start cell, plus the grid origin and step."""
    x0, y0, x1, y1 = scene.bounds.as_list()
    xs = np.arange(x0, x1 + 1e-9, step)
    ys = np.arange(y0, y1 + 1e-9, step)
    gx, gy = np.meshgrid(xs, ys, indexing="ij")
    free = scene.geometry(poses).valid(np.stack([gx.ravel(), gy.ravel()], 1)).reshape(gx.shape)
    labels, _ = ndimage.label(free)
    i = int(round((scene.start[0] - x0) / step))
    j = int(round((scene.start[1] - y0) / step))
    start_label = labels[i, j]
    if start_label == 0:
        return np.zeros_like(free), (x0, y0), step
    return labels == start_label, (x0, y0), step


def is_occluded(scene: Scene, obj_id: str, poses: dict[str, tuple[float, float]]) -> bool:
    """No collision-free grasp configuration connected to the robot's start."""
    cand = grasp_candidates(scene, obj_id, poses)
    if len(cand) == 0:
        return True
    mask, (x0, y0), step = reachable_mask(scene, poses)
    i = np.clip(np.rint((cand[:, 0] - x0) / step).astype(int), 0, mask.shape[0] - 1)
    j = np.clip(np.rint((cand[:, 1] - y0) / step).astype(int), 0, mask.shape[1] - 1)
    return not bool(mask[i, j].any())


def removal_order(scene: Scene, poses: dict[str, tuple[float, float]]) -> list[str] | None:
    """Greedy order in which objects become graspable by removing free ones; None if stuck.

    Removing objects never occludes others, so the greedy order exists iff any order does.
    """
    remaining = dict(poses)
    order = []
    while remaining:
        free = [o for o in sorted(remaining) if not is_occluded(scene, o, remaining)]
        if not free:
            return None
        order.append(free[0])
        del remaining[free[0]]
    return order


def _scene(cfg: GeneratorConfig, start, objects, regions, obstacles) -> Scene:
    return Scene(Rect(*cfg.bounds), cfg.robot_radius, cfg.reach, tuple(start), tuple(objects),
                 tuple(regions), tuple(obstacles))


def _place_ok(scene_static: Scene, placed: list[ObjectSpec], c, r, region: Rect) -> bool:
    if not region.contains_disc(c, r):
        return False
    for o in placed:
        if math.dist(o.pose, c) < o.radius + r:
            return False
    for ob in scene_static.obstacles:
        if ob.rect.distance(c) < r:
            return False
    return True


def _problem_dict(scene: Scene, goal_atoms: list[str], meta: dict, name: str) -> dict:
    predicates, actions = pick_place_domain()
    init = ["handempty"]
    for o in scene.objects:
        for rg in scene.regions:
            if rg.rect.contains_disc(o.pose, o.radius):
                init.append(f"on({o.id}, {rg.id})")
                break
    return {
        "name": name,
        "scene": {
            "bounds": scene.bounds.as_list(),
            "robot": {"radius": scene.robot_radius, "reach": scene.reach, "start": list(scene.start)},
            "objects": [{"id": o.id, "radius": o.radius, "pose": [round(o.pose[0], 6), round(o.pose[1], 6)],
                         "color": o.color} for o in scene.objects],
            "regions": [{"id": r.id, "rect": r.rect.as_list(), "color": r.color} for r in scene.regions],
            "obstacles": [{"id": o.id, "rect": o.rect.as_list()} for o in scene.obstacles],
        },
        "predicates": predicates,
        "actions": actions,
        "init": init,
        "goal": {"discrete": {"and": goal_atoms}, "geometric": []},
        "meta": meta,
    }


# -- clutter clearing -----------------------------------------------------------------------

CLUTTER_REGIONS = (
    Region("source_a", Rect(0.0, 0.0, 3.0, 3.0), "tan"),
    Region("source_b", Rect(0.0, 7.0, 3.0, 10.0), "tan"),
    Region("goal_green", Rect(7.0, 0.5, 9.5, 3.5), "green"),
    Region("goal_blue", Rect(7.0, 6.5, 9.5, 9.5), "blue"),
)
# each source table holds a walled slot along its outer edge, open towards the middle
CLUTTER_SLOT_WIDTH = 1.4
CLUTTER_SLOT_DEPTH = 1.8
CLUTTER_WALL = 0.2
CLUTTER_SLOTS = {
    "source_a": Rect(0.0, 0.0, CLUTTER_SLOT_DEPTH, CLUTTER_SLOT_WIDTH),
    "source_b": Rect(0.0, 10.0 - CLUTTER_SLOT_WIDTH, CLUTTER_SLOT_DEPTH, 10.0),
}
CLUTTER_OBSTACLES = (
    Obstacle("a_slot_wall", Rect(0.0, CLUTTER_SLOT_WIDTH, CLUTTER_SLOT_DEPTH, CLUTTER_SLOT_WIDTH + CLUTTER_WALL)),
    Obstacle("b_slot_wall", Rect(0.0, 10.0 - CLUTTER_SLOT_WIDTH - CLUTTER_WALL, CLUTTER_SLOT_DEPTH,
                                 10.0 - CLUTTER_SLOT_WIDTH)),
    Obstacle("block", Rect(4.3, 4.0, 5.7, 6.0)),
)
# free part of each table outside its slot
CLUTTER_OPEN = {
    "source_a": Rect(0.0, CLUTTER_SLOT_WIDTH + CLUTTER_WALL, 3.0, 3.0),
    "source_b": Rect(0.0, 7.0, 3.0, 10.0 - CLUTTER_SLOT_WIDTH - CLUTTER_WALL),
}
CLUTTER_START = (5.0, 2.0)


def generate_clutter(n_objects: int, seed: int, cfg: GeneratorConfig = GeneratorConfig()) -> dict:
    """Objects scattered on two source tables; each colour has a goal table.

    Objects alternate between the source tables and between green and blue.
    A table's first object goes to the back of the table's slot with
    probability ``slot_probability``. A later object on that table is, with
    probability ``pack_probability``, dropped into the slot in front of it,
    which occludes the object at the back. All other objects are scattered
    over the open part of the table.
    """
    if n_objects < 1:
        raise ValueError("n_objects must be at least 1")
    rng = _rng("clutter", seed)
    static = _scene(cfg, CLUTTER_START, (), CLUTTER_REGIONS, CLUTTER_OBSTACLES)
    for _ in range(100):
        placed: list[ObjectSpec] = []
        slot: dict[str, float] = {}  # table -> x of the object at the back of its slot
        gated: set[str] = set()
        attempts = 0
        for i in range(n_objects):
            table = CLUTTER_REGIONS[i % 2]
            color = "green" if i % 2 == 0 else "blue"
            on_table = sum(table.rect.contains_disc(o.pose, o.radius) for o in placed)
            u = rng.random()
            if on_table == 0:
                where = "back" if u < cfg.slot_probability else "open"
            elif table.id in slot and table.id not in gated and u < cfg.pack_probability:
                where = "gate"
            else:
                where = "open"
            sr = CLUTTER_SLOTS[table.id]
            mid = (sr.y0 + sr.y1) / 2
            while True:
                attempts += 1
                if attempts > MAX_PLACEMENT_ATTEMPTS:
                    raise GenerationError(f"could not place {n_objects} objects")
                r = float(rng.uniform(*cfg.radius_range))
                if where == "back":
                    c = (r + rng.uniform(0.02, 0.1), mid + rng.uniform(-0.05, 0.05))
                elif where == "gate":
                    c = (slot[table.id] + rng.uniform(1.15, 1.4), mid + rng.uniform(-0.05, 0.05))
                else:
                    rect = CLUTTER_OPEN[table.id]
                    c = (rng.uniform(rect.x0 + r, rect.x1 - r), rng.uniform(rect.y0 + r, rect.y1 - r))
                if _place_ok(static, placed, c, r, table.rect):
                    break
            if where == "back":
                slot[table.id] = c[0]
            elif where == "gate":
                gated.add(table.id)
            placed.append(ObjectSpec(f"o{i}", round(r, 4), (round(c[0], 6), round(c[1], 6)), color))
        scene = _scene(cfg, CLUTTER_START, placed, CLUTTER_REGIONS, CLUTTER_OBSTACLES)
        poses = {o.id: o.pose for o in placed}
        if removal_order(scene, poses) is None:
            continue
        occluded = {o.id: is_occluded(scene, o.id, poses) for o in placed}
        goal = [f"on({o.id}, goal_{o.color})" for o in placed]
        meta = {"kind": "clutter", "seed": int(seed), "n_objects": n_objects, "occluded": occluded}
        data = _problem_dict(scene, goal, meta, f"clutter_{n_objects}_{seed}")
        problem_from_dict(data)  # validates collision-freedom and schema
        return data
    raise GenerationError("no solvable clutter arrangement found")


# -- shelf rearrangement ----------------------------------------------------------------------

SHELF_DEPTH_X0 = 6.6
SHELF_WALL = 0.2
SHELF_INNER = 1.7


def _shelf_layout():
    """Two shelves cut into a solid block on the right; they open towards the free area."""
    lo, hi = SHELF_WALL, 10.0 - SHELF_WALL - SHELF_INNER
    regions = (Region("shelf_a", Rect(SHELF_DEPTH_X0, hi, 10.0, hi + SHELF_INNER), "brown"),
               Region("shelf_b", Rect(SHELF_DEPTH_X0, lo, 10.0, lo + SHELF_INNER), "brown"),
               Region("staging", Rect(0.5, 3.5, 3.5, 6.5), "tan"))
    obstacles = (Obstacle("shelf_a_top", Rect(SHELF_DEPTH_X0, 10.0 - SHELF_WALL, 10.0, 10.0)),
                 Obstacle("shelf_block", Rect(SHELF_DEPTH_X0, lo + SHELF_INNER, 10.0, hi)),
                 Obstacle("shelf_b_bottom", Rect(SHELF_DEPTH_X0, 0.0, 10.0, SHELF_WALL)))
    return regions, obstacles


SHELF_START = (2.0, 2.0)


def generate_shelf(n_objects: int, seed: int, cfg: GeneratorConfig = GeneratorConfig()) -> dict:
    """Two targets at the back of two narrow shelves must swap shelves.

    The ``n_objects - 2`` distractors alternate between shelves. Inside a
    shelf they are pushed against alternating side walls, each one further
    towards the opening, so they cut off the grasps from their side and
    leave a lane that narrows into a zig-zag as distractors accumulate.
    """
    if n_objects < 2:
        raise ValueError("shelf instances need at least the two targets")
    rng = _rng("shelf", seed)
    regions, obstacles = _shelf_layout()
    static = _scene(cfg, SHELF_START, (), regions, obstacles)
    shelves = regions[:2]
    attempts = 0
    for _ in range(100):
        placed: list[ObjectSpec] = []
        front = {}
        count = {s.id: 0 for s in shelves}
        for k, shelf in enumerate(shelves):
            r = float(rng.uniform(*cfg.radius_range))
            mid = (shelf.rect.y0 + shelf.rect.y1) / 2
            c = (10.0 - r - rng.uniform(0.0, 0.1), mid + rng.uniform(-0.1, 0.1))
            placed.append(ObjectSpec(f"target_{'ab'[k]}", round(r, 4), (round(c[0], 6), round(c[1], 6)), "green"))
            front[shelf.id] = c[0]
        for i in range(n_objects - 2):
            shelf = shelves[i % 2]
            j = count[shelf.id]
            while True:
                attempts += 1
                if attempts > MAX_PLACEMENT_ATTEMPTS:
                    raise GenerationError(f"could not place {n_objects - 2} distractors")
                r = float(rng.uniform(*cfg.radius_range))
                shift = rng.uniform(0.3, 0.5) if j == 0 else rng.uniform(0.6, 0.9)
                wall_gap = rng.uniform(0.0, 0.05)
                y = shelf.rect.y1 - r - wall_gap if j % 2 == 0 else shelf.rect.y0 + r + wall_gap
                c = (front[shelf.id] - shift, y)
                if _place_ok(static, placed, c, r, shelf.rect):
                    break
            placed.append(ObjectSpec(f"d{i}", round(r, 4), (round(c[0], 6), round(c[1], 6)), "red"))
            front[shelf.id] = c[0]
            count[shelf.id] += 1
        scene = _scene(cfg, SHELF_START, placed, regions, obstacles)
        poses = {o.id: o.pose for o in placed}
        if removal_order(scene, poses) is None:
            continue
        occluded = {o.id: is_occluded(scene, o.id, poses) for o in placed}
        goal = ["on(target_a, shelf_b)", "on(target_b, shelf_a)"]
        meta = {"kind": "shelf", "seed": int(seed), "n_objects": n_objects, "occluded": occluded}
        data = _problem_dict(scene, goal, meta, f"shelf_{n_objects - 2}_{seed}")
        problem_from_dict(data)
        return data
    raise GenerationError("no solvable shelf arrangement found")


def generate_instance(kind: str, n_objects: int, seed: int,
                      cfg: GeneratorConfig = GeneratorConfig()) -> dict:
    if kind == "clutter":
        return generate_clutter(n_objects, seed, cfg)
    if kind == "shelf":
        return generate_shelf(n_objects, seed, cfg)
    raise ValueError(f"unknown instance kind {kind!r}")
