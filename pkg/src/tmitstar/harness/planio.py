"""Plan files: JSON serialization of solution paths.

A plan file lists segments; each segment holds the hybrid states of one
motion within a mode and the name of the action taken at its last state
(``null`` for the final segment). States carry the robot configuration,
every object pose, the names of the true discrete symbols, the attached
object and its grasp offset. Floats are written with ``repr`` precision,
so a plan loads back bit-identical.
"""
from __future__ import annotations

import json
from pathlib import Path

from tmitstar.hybridspace import HybridState
from tmitstar.search.forward import Segment, SolutionPath
from tmitstar.world2d.problem import Problem


def state_to_dict(q: HybridState, problem: Problem) -> dict:
    return {
        "robot": list(q.robot_config),
        "objects": {o: list(p) for o, p in sorted(q.object_poses.items())},
        "symbols": [s for s, b in zip(problem.symbols, q.discrete) if b],
        "attached": q.attached,
        "offset": list(q.grasp_offset) if q.grasp_offset is not None else None,
    }


def state_from_dict(d: dict, problem: Problem) -> HybridState:
    index = problem.symbol_index
    unknown = [s for s in d["symbols"] if s not in index]
    if unknown:
        raise ValueError(f"unknown symbols {unknown}")
    true = set(d["symbols"])
    offset = tuple(float(v) for v in d["offset"]) if d.get("offset") is not None else None
    return HybridState(tuple(float(v) for v in d["robot"]),
                       {o: (float(p[0]), float(p[1])) for o, p in d["objects"].items()},
                       tuple(s in true for s in problem.symbols), d.get("attached"), offset)


def plan_to_dict(path: SolutionPath, problem: Problem) -> dict:
    return {
        "problem": problem.name,
        "cost": path.cost,
        "actions": [a.name for a in path.actions],
        "segments": [{"states": [state_to_dict(q, problem) for q in s.states],
                      "action": s.action.name if s.action is not None else None}
                     for s in path.segments],
    }


def plan_from_dict(data: dict, problem: Problem) -> SolutionPath:
    segments = []
    for s in data["segments"]:
        action = problem.action_by_name(s["action"]) if s.get("action") is not None else None
        segments.append(Segment([state_from_dict(q, problem) for q in s["states"]], action))
    path = SolutionPath(segments, 0.0)
    path.cost = path.motion_cost()
    return path


def save_plan(path: SolutionPath, problem: Problem, file) -> None:
    Path(file).write_text(json.dumps(plan_to_dict(path, problem), indent=1) + "\n")


def load_plan(file, problem: Problem) -> SolutionPath:
    return plan_from_dict(json.loads(Path(file).read_text()), problem)
