"""Effort counters and the clocks built on them."""
from __future__ import annotations

import time
from dataclasses import asdict, dataclass


@dataclass
class Counters:
    batches: int = 0
    sampler_calls: int = 0
    samples: int = 0
    sample_rejections: int = 0
    collision_points: int = 0
    gated_calls: int = 0
    projections_attempted: int = 0
    projections_succeeded: int = 0
    projection_iterations: int = 0
    projection_failures: int = 0
    transitions: int = 0
    edges_validated: int = 0
    edges_invalid: int = 0
    forward_pops: int = 0
    reverse_pops: int = 0
    plans_generated: int = 0
    prefix_blocks: int = 0
    full_blocks: int = 0
    budget_increases: int = 0

    def as_dict(self) -> dict:
        return asdict(self)


# per-unit costs of the deterministic work clock, in seconds; calibrated so that
# work-clock time is of the same order as wall-clock time on a desktop core
WORK_COSTS = {
    "collision_points": 2.0e-7,
    "projection_iterations": 2.0e-5,
    "forward_pops": 1.5e-5,
    "reverse_pops": 1.0e-5,
    "edges_validated": 2.0e-5,
    "samples": 5.0e-6,
    "plans_generated": 5.0e-3,
    "sampler_calls": 1.0e-4,
}


class WallClock:
    name = "wall"

    def __init__(self, counters: Counters | None = None):
        self._t0 = time.perf_counter()

    def now(self) -> float:
        return time.perf_counter() - self._t0


class WorkClock:
    """Deterministic clock: elapsed time is a weighted sum of effort counters.

    Runs with the same seed produce identical timestamps on any machine.
    """

    name = "work"

    def __init__(self, counters: Counters):
        self.counters = counters

    def now(self) -> float:
        c = self.counters
        return sum(getattr(c, k) * w for k, w in WORK_COSTS.items())


def make_clock(kind: str, counters: Counters):
    if kind == "wall":
        return WallClock(counters)
    if kind == "work":
        return WorkClock(counters)
    raise ValueError(f"unknown clock {kind!r}")
