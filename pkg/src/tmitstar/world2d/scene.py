"""Planar scene geometry and collision checking.

The robot is a disc whose configuration is its centre. Objects are discs,
regions and static obstacles are axis-aligned rectangles. Touching is not a
collision; only strict overlap is.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Mapping, Sequence

import numpy as np

from tmitstar.hybridspace import HybridState, Pose


@dataclass(frozen=True)
class Rect:
    x0: float
    y0: float
    x1: float
    y1: float

    def __post_init__(self):
        if not (self.x1 > self.x0 and self.y1 > self.y0):
            raise ValueError(f"degenerate rectangle {self}")

    @property
    def area(self) -> float:
        return (self.x1 - self.x0) * (self.y1 - self.y0)

    @property
    def center(self) -> Pose:
        return ((self.x0 + self.x1) / 2, (self.y0 + self.y1) / 2)

    def as_list(self) -> list[float]:
        return [self.x0, self.y0, self.x1, self.y1]

    def shrink(self, r: float) -> tuple[float, float, float, float]:
        """Bounds for the centre of a disc of radius ``r`` kept inside the rectangle."""
        x0, x1 = self.x0 + r, self.x1 - r
        y0, y1 = self.y0 + r, self.y1 - r
        if x0 > x1:
            x0 = x1 = (self.x0 + self.x1) / 2
        if y0 > y1:
            y0 = y1 = (self.y0 + self.y1) / 2
        return x0, y0, x1, y1

    def contains_disc(self, c: Sequence[float], r: float) -> bool:
        return (self.x0 <= c[0] - r and c[0] + r <= self.x1
                and self.y0 <= c[1] - r and c[1] + r <= self.y1)

    def distance(self, p: Sequence[float]) -> float:
        dx = max(self.x0 - p[0], 0.0, p[0] - self.x1)
        dy = max(self.y0 - p[1], 0.0, p[1] - self.y1)
        return math.hypot(dx, dy)


@dataclass(frozen=True)
class ObjectSpec:
    id: str
    radius: float
    pose: Pose
    color: str = "gray"


@dataclass(frozen=True)
class Region:
    id: str
    rect: Rect
    color: str = "none"


@dataclass(frozen=True)
class Obstacle:
    id: str
    rect: Rect


@dataclass(frozen=True)
class Scene:
    bounds: Rect
    robot_radius: float
    reach: float
    start: Pose
    objects: tuple[ObjectSpec, ...] = ()
    regions: tuple[Region, ...] = ()
    obstacles: tuple[Obstacle, ...] = ()
    _cache: dict = field(default_factory=dict, compare=False, repr=False, hash=False)

    @cached_property
    def object_ids(self) -> tuple[str, ...]:
        return tuple(o.id for o in self.objects)

    @cached_property
    def radius_of(self) -> dict[str, float]:
        return {o.id: o.radius for o in self.objects}

    @cached_property
    def region_by_id(self) -> dict[str, Region]:
        return {r.id: r for r in self.regions}

    @cached_property
    def obstacle_array(self) -> np.ndarray:
        if not self.obstacles:
            return np.zeros((0, 4))
        return np.array([o.rect.as_list() for o in self.obstacles], dtype=float)

    @property
    def config_measure(self) -> float:
        """Lebesgue measure of the robot-centre box, used by the RGG radius."""
        x0, y0, x1, y1 = self.bounds.shrink(self.robot_radius)
        return max((x1 - x0) * (y1 - y0), 1e-9)

    @property
    def resolution(self) -> float:
        """Straight-segment collision checking resolution."""
        r = 0.25 * self.robot_radius
        if self.objects:
            r = min(r, 0.5 * min(o.radius for o in self.objects))
        return r

    def grasp_radius(self, obj: str) -> float:
        """Centre distance at which ``obj`` is within reach of the robot."""
        return self.robot_radius + self.radius_of[obj] + self.reach

    def geometry(self, ungrasped: Mapping[str, Pose], attached: str | None = None,
                 offset: Pose | None = None) -> ModeGeometry:
        key = (tuple(sorted(ungrasped.items())), attached, offset)
        geo = self._cache.get(key)
        if geo is None:
            if len(self._cache) > 4096:
                self._cache.clear()
            geo = ModeGeometry(self, ungrasped, attached, offset)
            self._cache[key] = geo
        return geo

    def geometry_of(self, q: HybridState) -> ModeGeometry:
        return self.geometry(q.ungrasped_poses(), q.attached, q.grasp_offset)


def _disc_rect_clear(cx: np.ndarray, cy: np.ndarray, r: float, rects: np.ndarray) -> np.ndarray:
    """True where a disc of radius ``r`` does not overlap any rectangle."""
    if len(rects) == 0:
        return np.ones(cx.shape, dtype=bool)
    dx = np.maximum(np.maximum(rects[:, 0][None, :] - cx[:, None], 0.0), cx[:, None] - rects[:, 2][None, :])
    dy = np.maximum(np.maximum(rects[:, 1][None, :] - cy[:, None], 0.0), cy[:, None] - rects[:, 3][None, :])
    return np.all(dx * dx + dy * dy >= r * r, axis=1)


def _disc_discs_clear(cx: np.ndarray, cy: np.ndarray, r: float, centers: np.ndarray,
                      radii: np.ndarray) -> np.ndarray:
    if len(centers) == 0:
        return np.ones(cx.shape, dtype=bool)
    dx = cx[:, None] - centers[:, 0][None, :]
    dy = cy[:, None] - centers[:, 1][None, :]
    lim = (radii + r)[None, :]
    return np.all(dx * dx + dy * dy >= lim * lim, axis=1)


class ModeGeometry:
    """Collision checker for one fixed placement of ungrasped objects and one grasp."""

    def __init__(self, scene: Scene, ungrasped: Mapping[str, Pose], attached: str | None,
                 offset: Pose | None):
        self.scene = scene
        self.attached = attached
        self.offset = offset
        ids = [o for o in scene.object_ids if o in ungrasped and o != attached]
        self.centers = np.array([ungrasped[o] for o in ids], dtype=float).reshape(len(ids), 2)
        self.radii = np.array([scene.radius_of[o] for o in ids], dtype=float)
        self.carried_radius = scene.radius_of[attached] if attached is not None else 0.0
        b = scene.bounds
        self._b = (b.x0, b.y0, b.x1, b.y1)

    def _disc_ok(self, cx, cy, r):
        x0, y0, x1, y1 = self._b
        ok = (cx - r >= x0) & (cx + r <= x1) & (cy - r >= y0) & (cy + r <= y1)
        ok &= _disc_rect_clear(cx, cy, r, self.scene.obstacle_array)
        ok &= _disc_discs_clear(cx, cy, r, self.centers, self.radii)
        return ok

    def valid(self, points: np.ndarray) -> np.ndarray:
        """Validity of robot configurations ``points`` (N, 2)."""
        pts = np.asarray(points, dtype=float).reshape(-1, 2)
        cx, cy = pts[:, 0], pts[:, 1]
        ok = self._disc_ok(cx, cy, self.scene.robot_radius)
        if self.attached is not None:
            ox, oy = self.offset
            ok &= self._disc_ok(cx + ox, cy + oy, self.carried_radius)
        return ok

    def valid_point(self, p: Sequence[float]) -> bool:
        return bool(self.valid(np.asarray(p, dtype=float).reshape(1, 2))[0])

    def valid_segment(self, a: Sequence[float], b: Sequence[float],
                      resolution: float | None = None) -> bool:
        pts = interpolate(a, b, resolution or self.scene.resolution)
        return bool(self.valid(pts).all())

    def sweep_clear(self, a: Sequence[float], b: Sequence[float]) -> bool:
        """Exact test of the straight translation ``a``-``b``: robot and carried discs stay clear.

        Implies validity of every interpolated configuration at any resolution.
        """
        a = np.asarray(a, dtype=float)
        b = np.asarray(b, dtype=float)
        if not self.valid(np.stack([a, b])).all():
            return False  # endpoints cover the bounds test: the box of valid centres is convex
        if not self._sweep_ok(a, b, self.scene.robot_radius):
            return False
        if self.attached is not None:
            off = np.asarray(self.offset, dtype=float)
            return self._sweep_ok(a + off, b + off, self.carried_radius)
        return True

    def _sweep_ok(self, a: np.ndarray, b: np.ndarray, r: float) -> bool:
        if len(self.centers) and np.any(point_segment_distance(self.centers, a, b) < self.radii + r):
            return False
        rects = self.scene.obstacle_array
        return not (len(rects) and np.any(segment_rect_distance(a, b, rects) < r))


def point_segment_distance(p: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Distance of each row of ``p`` (N, 2) to the segment ``a``-``b``."""
    p = np.asarray(p, dtype=float).reshape(-1, 2)
    d = b - a
    dd = float(d @ d)
    if dd == 0.0:
        return np.hypot(p[:, 0] - a[0], p[:, 1] - a[1])
    t = np.clip(((p - a) @ d) / dd, 0.0, 1.0)
    q = a[None, :] + t[:, None] * d[None, :]
    return np.hypot(p[:, 0] - q[:, 0], p[:, 1] - q[:, 1])


def _point_rect_distance(p: np.ndarray, rects: np.ndarray) -> np.ndarray:
    dx = np.maximum(np.maximum(rects[:, 0] - p[0], 0.0), p[0] - rects[:, 2])
    dy = np.maximum(np.maximum(rects[:, 1] - p[1], 0.0), p[1] - rects[:, 3])
    return np.hypot(dx, dy)


def _segment_hits_rect(a: np.ndarray, b: np.ndarray, rects: np.ndarray) -> np.ndarray:
    """Slab test: does the closed segment intersect each closed rectangle (M, 4)?"""
    t0 = np.zeros(len(rects))
    t1 = np.ones(len(rects))
    hit = np.ones(len(rects), dtype=bool)
    for k in range(2):
        lo, hi = rects[:, k], rects[:, k + 2]
        dk = b[k] - a[k]
        if dk == 0.0:
            hit &= (a[k] >= lo) & (a[k] <= hi)
            continue
        u0 = (lo - a[k]) / dk
        u1 = (hi - a[k]) / dk
        t0 = np.maximum(t0, np.minimum(u0, u1))
        t1 = np.minimum(t1, np.maximum(u0, u1))
    return hit & (t0 <= t1)


def segment_rect_distance(a: np.ndarray, b: np.ndarray, rects: np.ndarray) -> np.ndarray:
    """Euclidean distance between the segment ``a``-``b`` and each rectangle (M, 4)."""
    rects = np.asarray(rects, dtype=float).reshape(-1, 4)
    # disjoint convex sets: the closest pair involves a segment endpoint or a rectangle corner
    d = np.minimum(_point_rect_distance(a, rects), _point_rect_distance(b, rects))
    for cx, cy in ((0, 1), (2, 1), (2, 3), (0, 3)):
        d = np.minimum(d, point_segment_distance(rects[:, [cx, cy]], a, b))
    return np.where(_segment_hits_rect(a, b, rects), 0.0, d)


def interpolate(a: Sequence[float], b: Sequence[float], resolution: float) -> np.ndarray:
    """Points on the segment ``a``-``b`` spaced at most ``resolution`` apart, endpoints included."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    length = float(np.linalg.norm(b - a))
    n = max(int(math.ceil(length / resolution)), 1)
    t = np.linspace(0.0, 1.0, n + 1)[:, None]
    pts = a[None, :] + t * (b - a)[None, :]
    pts[-1] = b  # exact endpoint, not a + 1 * (b - a)
    return pts


def is_valid(q: HybridState, scene: Scene) -> bool:
    """Robot disc and carried object inside bounds and clear of obstacles and ungrasped objects."""
    return scene.geometry_of(q).valid_point(q.robot_config)
