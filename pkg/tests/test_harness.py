from __future__ import annotations

import copy
import csv
import json
import math
import pickle

import numpy as np
import pytest

from conftest import make_problem
from tmitstar.cli import main
from tmitstar.harness.bench import (BenchConfig, Layout, TrialRecord, bootstrap_median_ci, layout_suite,
                                    read_results, run_benchmark, run_trial, summarize, write_results)
from tmitstar.harness.oracles import OracleRefusal, discrete_bfs_oracle, grid_tmp_oracle
from tmitstar.harness.planio import load_plan, plan_from_dict, plan_to_dict, save_plan
from tmitstar.harness.svg import render_svg
from tmitstar.harness.validate import validate_solution
from tmitstar.hybridspace import HybridState
from tmitstar.search.anytime import PlannerConfig, TMITStar
from tmitstar.search.forward import Segment, SolutionPath
from tmitstar.taskplan import SymbolicDomain
from tmitstar.world2d.generate import generate_instance
from tmitstar.world2d.problem import dumps_problem, problem_from_dict


def one_object():
    return make_problem(objects=[("o", 0.2, (2.0, 5.0))],
                        regions=[("left", (1.0, 4.0, 3.0, 6.0)), ("right", (7.0, 4.0, 9.0, 6.0))],
                        obstacles=[("pillar", (4.6, 4.0, 5.4, 6.0))],
                        goal=["on(o, right)"], start=(5.0, 2.0), name="one")


@pytest.fixture(scope="module")
def solved():
    p = one_object()
    res = TMITStar(p, PlannerConfig(seed=1, clock="work", stop_on_first=True)).run(1e9)
    assert res.outcome == "Solved"
    return p, res.best.path


def corrupt(path, fn) -> SolutionPath:
    """Deep copy of ``path`` with ``fn(segments)`` applied."""
    segs = [Segment(list(s.states), s.action) for s in path.segments]
    fn(segs)
    return SolutionPath(segs, path.cost)


def test_planner_solution_is_valid_and_survives_file_round_trip(solved, tmp_path):
    p, path = solved
    assert validate_solution(path, p).valid
    save_plan(path, p, tmp_path / "plan.json")
    again = load_plan(tmp_path / "plan.json", p)
    assert plan_to_dict(again, p) == plan_to_dict(path, p)
    assert validate_solution(again, p).valid
    assert str(validate_solution(again, p)) == "Valid"


def test_validator_flags_wrong_start(solved):
    p, path = solved
    bad = corrupt(path, lambda s: s[0].states.__setitem__(0, s[0].states[0].with_config((5.0, 3.0))))
    assert 1 in validate_solution(bad, p).conditions()


def test_validator_flags_collision(solved):
    p, path = solved
    s0 = path.segments[0].states
    # detour through the pillar
    def through(segs):
        segs[0].states = [s0[0], s0[0].with_config((5.0, 5.0))] + list(s0[1:])
    assert 2 in validate_solution(corrupt(path, through), p).conditions()


def test_validator_flags_unsatisfied_precondition(solved):
    p, path = solved
    def far(segs):
        last = segs[0].states[-1].with_config((5.0, 2.0))
        segs[0].states = list(segs[0].states[:-1]) + [last]
    assert 3 in validate_solution(corrupt(path, far), p).conditions()


def test_validator_flags_effect_mismatch(solved):
    p, path = solved
    def teleport(segs):
        q = segs[1].states[0]
        poses = dict(q.object_poses)
        poses["o"] = (poses["o"][0] + 0.5, poses["o"][1])
        off = (q.grasp_offset[0] + 0.5, q.grasp_offset[1])
        segs[1].states = [HybridState(q.robot_config, poses, q.discrete, q.attached, off)] + [
            HybridState(s.robot_config, {"o": (s.robot_config[0] + off[0], s.robot_config[1] + off[1])},
                        s.discrete, s.attached, off) for s in segs[1].states[1:]]
    report = validate_solution(corrupt(path, teleport), p)
    assert 4 in report.conditions()
    assert "Violation" in str(report)
    # a null action may only end the plan
    assert 4 in validate_solution(corrupt(path, lambda s: setattr(s[0], "action", None)), p).conditions()


def test_validator_flags_unreached_goal(solved):
    p, path = solved
    def stop_early(segs):
        del segs[-1]
        segs[-1].action = None
    assert 5 in validate_solution(corrupt(path, stop_early), p).conditions()


def test_bfs_oracle_examples():
    p = one_object()
    assert discrete_bfs_oracle(SymbolicDomain.from_problem(p)) == 2
    q = make_problem(objects=[("o", 0.2, (2.0, 5.0))], regions=[("left", (1.0, 4.0, 3.0, 6.0))],
                     goal=["holding(o)", "handempty"], start=(5.0, 2.0))
    assert discrete_bfs_oracle(SymbolicDomain.from_problem(q)) is None
    big = make_problem(objects=[(f"o{i}", 0.2, (1.5 + i, 5.0)) for i in range(4)],
                       regions=[("left", (1.0, 4.0, 5.0, 6.0)), ("right", (6.0, 4.0, 9.5, 6.0))],
                       goal=[f"on(o{i}, right)" for i in range(4)], start=(5.0, 2.0))
    with pytest.raises(OracleRefusal):
        discrete_bfs_oracle(SymbolicDomain.from_problem(big), cap=10)


def test_grid_oracle_brackets_straight_line_cost():
    p = make_problem(regions=[("corner", (8.5, 8.5, 9.5, 9.5))], start=(1.0, 1.0),
                     geometric_goal=["robot_in_region(corner)"])
    exact = math.dist((1.0, 1.0), (8.8, 8.8))
    b = grid_tmp_oracle(p, 0.1)
    assert b.lower - 1e-9 <= exact <= b.upper + 1e-9
    assert b.upper == pytest.approx(exact, rel=1e-6)  # diagonal is on the grid


def test_grid_oracle_upper_bounds_planner_on_pick_place(solved):
    p, path = solved
    b = grid_tmp_oracle(p, 0.1)
    assert b is not None and b.lower <= b.upper < math.inf
    assert b.n_modes >= 3


def test_csv_round_trip_and_summary(tmp_path):
    recs = [TrialRecord("a", 0, 5.0, [(0.5, 10.0), (1.5, 9.0)], "Solved", 5.0),
            TrialRecord("a", 1, 5.0, [], "Timeout", 5.0),
            TrialRecord("a", 2, 5.0, [(0.25, 12.0)], "Solved", 5.0),
            TrialRecord("b", 0, 5.0, [], "Timeout", 5.0)]
    write_results(recs, tmp_path / "results.csv")
    rows = read_results(tmp_path / "results.csv")
    with open(tmp_path / "results.csv") as f:
        raw = list(csv.reader(f))
    assert raw[0] == ["instance", "seed", "t_seconds", "cost", "event", "outcome"]
    assert ["a", "1", "5.000000", "inf", "final", "Timeout"] in raw
    summary = {r[0]: r for r in summarize(rows)}
    assert summary["a"][:4] == ["a", "3", "2", "0.500000"]
    assert summary["a"][6] == "12.000000"  # median of 9, 12, inf
    assert summary["b"] == ["b", "1", "0", "inf", "inf", "inf", "inf"]


def test_bootstrap_interval_is_deterministic_and_covers_median():
    v = np.random.default_rng(3).normal(10.0, 2.0, 40)
    lo, hi = bootstrap_median_ci(v, rng=np.random.default_rng(0))
    assert (lo, hi) == bootstrap_median_ci(v, rng=np.random.default_rng(0))
    assert lo <= float(np.median(v)) <= hi
    assert bootstrap_median_ci([math.inf] * 5) == (math.inf, math.inf)


def test_svg_has_one_polyline_per_segment(solved):
    p, path = solved
    svg = render_svg(p, path, "t")
    assert svg.startswith("<?xml") or svg.startswith("<svg")
    assert svg.count('class="segment"') == len(path.segments)
    assert svg.count('class="transition"') == len(path.actions)
    assert render_svg(p, None).count('class="segment"') == 0


def test_crashing_trial_is_isolated(tmp_path):
    good = generate_instance("clutter", 2, 0)
    broken = copy.deepcopy(good)
    broken["scene"]["objects"][0]["radius"] = "oops"
    rec = run_trial("broken", broken, 0, 1.0, BenchConfig(clock="work"))
    assert rec.crashed and rec.outcome == "Timeout" and "radius" in rec.error
    records = run_benchmark([("broken", broken), ("good", good)], [0], 1.0, tmp_path,
                            BenchConfig(clock="work", svg=False, save_plans=False))
    assert [r.crashed for r in records] == [True, False]
    summary = (tmp_path / "summary.csv").read_text().splitlines()
    assert summary[1].startswith("broken,1,0,inf") and summary[2].startswith("good,1,1,")


def test_summary_recomputes_from_results_file(tmp_path):
    data = generate_instance("clutter", 2, 1)
    run_benchmark([("c2", data)], range(3), 1.0, tmp_path, BenchConfig(clock="work", svg=True))
    rows = read_results(tmp_path / "results.csv")
    with open(tmp_path / "summary.csv") as f:
        assert list(csv.reader(f))[1:] == summarize(rows)
    assert len(list((tmp_path / "svg").glob("*.svg"))) == 3
    prob = problem_from_dict(data, name="c2")
    for plan_file in (tmp_path / "plans").glob("*.json"):
        assert validate_solution(plan_from_dict(json.loads(plan_file.read_text()), prob), prob).valid


def test_cli_gen_plan_validate(tmp_path, capsys):
    prob = tmp_path / "c2.json"
    assert main(["gen", "--kind", "clutter", "--objects", "2", "--seed", "0", "--out", str(prob)]) == 0
    out = tmp_path / "run"
    assert main(["plan", "--problem", str(prob), "--time-budget", "30", "--clock", "work",
                 "--stop-on-first", "--output", str(out), "--trace"]) == 0
    for f in ("results.csv", "plan.json", "trace.svg", "trace.json"):
        assert (out / f).is_file()
    assert main(["validate", "--problem", str(prob), "--plan", str(out / "plan.json")]) == 0
    assert "Valid" in capsys.readouterr().out
    # a corrupted plan is rejected
    plan = json.loads((out / "plan.json").read_text())
    plan["segments"] = plan["segments"][:1]
    plan["segments"][0]["action"] = None
    (out / "bad.json").write_text(json.dumps(plan))
    assert main(["validate", "--problem", str(prob), "--plan", str(out / "bad.json")]) == 1
    bad = tmp_path / "bad_problem.json"
    bad.write_text(dumps_problem(generate_instance("clutter", 2, 0)).replace('"init"', '"inits"'))
    assert main(["plan", "--problem", str(bad), "--time-budget", "1"]) == 2
    assert "error:" in capsys.readouterr().err


def test_layout_draws_one_generated_layout_per_seed(tmp_path):
    fam = Layout("clutter", 2)
    assert pickle.loads(pickle.dumps(fam)) == fam
    assert layout_suite("shelf", (2, 4))[1] == ("shelf_2", Layout("shelf", 4))
    cfg = BenchConfig(clock="work", svg=False, save_plans=False, stop_on_first=True)
    recs = run_benchmark([("clutter_2", fam)], [0, 1], 30.0, tmp_path, cfg)
    # each seed plans on its own layout, exactly as if the layout had been passed in
    for r in recs:
        fixed = run_trial("clutter_2", generate_instance("clutter", 2, r.seed), r.seed, 30.0, cfg)
        assert fixed.improvements == r.improvements
    assert recs[0].improvements != recs[1].improvements


def test_cli_bench_generate(tmp_path, capsys):
    out = tmp_path / "gen"
    assert main(["bench", "--generate", "clutter:1,2", "--seeds", "2", "--time-budget", "20", "--clock", "work",
                 "--stop-on-first", "--no-svg", "--out", str(out)]) == 0
    assert {r["instance"] for r in read_results(out / "results.csv")} == {"clutter_1", "clutter_2"}
    assert main(["bench", "--generate", "clutter", "--seeds", "1", "--time-budget", "1"]) == 2
    assert "KIND:N" in capsys.readouterr().err
