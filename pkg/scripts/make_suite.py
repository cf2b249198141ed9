"""Write the benchmark problem files: clutter 1-4 objects and shelf 0/2/4 distractors."""
from __future__ import annotations

import argparse
from pathlib import Path

from tmitstar.world2d.generate import generate_instance
from tmitstar.world2d.problem import dumps_problem

SUITE = {
    "clutter": [("clutter_1", 1), ("clutter_2", 2), ("clutter_3", 3), ("clutter_4", 4)],
    "shelf": [("shelf_0", 2), ("shelf_2", 4), ("shelf_4", 6)],  # two targets plus distractors
}


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="problems")
    ap.add_argument("--seed", type=int, default=0, help="generator seed (layout, not planner)")
    args = ap.parse_args(argv)
    for kind, items in SUITE.items():
        d = Path(args.out) / kind
        d.mkdir(parents=True, exist_ok=True)
        for name, n in items:
            (d / f"{name}.json").write_text(dumps_problem(generate_instance(kind, n, args.seed)))
            print(d / f"{name}.json")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
