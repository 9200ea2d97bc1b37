import json
import math
import xml.etree.ElementTree as ET

import numpy as np
import pytest

from kbfplan.cli import (BENCH_CSV_HEADER, bundled_scenario_names, emit_svg,
                         format_bench_table, inject_perception_error,
                         load_bundled_scenario, load_scenario, main,
                         read_bench_csv, run_bench, write_bench_csv)
from kbfplan.core import ParseError, Scenario, UncertaintyBounds, validate_scenario
from kbfplan.planners import plan_rrt
from kbfplan.sim import follow_path


MINIMAL = {
    "start": {"x": 0.5, "y": 0.5},
    "goal": {"x": 3.0, "y": 3.0},
    "bounds": {"xmin": 0, "xmax": 4, "ymin": 0, "ymax": 4},
}


def write_json(tmp_path, doc, name="scenario.json"):
    path = tmp_path / name
    path.write_text(json.dumps(doc))
    return path


def test_load_minimal_scenario(tmp_path):
    s = load_scenario(write_json(tmp_path, MINIMAL))
    assert isinstance(s, Scenario)
    assert s.obstacles == ()


def test_load_unknown_key(tmp_path):
    doc = dict(MINIMAL)
    doc["extra_stuff"] = 1
    with pytest.raises(ParseError, match="extra_stuff"):
        load_scenario(write_json(tmp_path, doc))


def test_load_bad_json_reports_position(tmp_path):
    path = tmp_path / "broken.json"
    path.write_text('{"start": }')
    with pytest.raises(ParseError, match="line 1"):
        load_scenario(path)


def test_bundled_scenarios_valid():
    names = bundled_scenario_names()
    assert names == ["scenario1", "scenario2", "scenario3", "scenario4"]
    for name in names:
        s = load_bundled_scenario(name)
        validate_scenario(s)
        assert len(s.obstacles) >= 3


def test_inject_zero_error_identity():
    s = load_bundled_scenario("scenario1")
    out = inject_perception_error(s, 0.0, 0.0, np.random.default_rng(0))
    assert out == s


def test_inject_displaces_centers_exactly():
    s = load_bundled_scenario("scenario1")
    out = inject_perception_error(s, 0.5, 0.0, np.random.default_rng(1))
    for o0, o1 in zip(s.obstacles, out.obstacles):
        assert math.hypot(o1.x - o0.x, o1.y - o0.y) == pytest.approx(0.5)
        assert o1.r == o0.r


def test_inject_clamps_radius_positive():
    s = load_bundled_scenario("scenario1")
    with pytest.warns(UserWarning, match="clamped"):
        out = inject_perception_error(s, 0.0, 10.0, np.random.default_rng(3))
    assert all(o.r > 0.0 for o in out.obstacles)


def test_bench_deterministic_non_timing_fields():
    scenarios = [("scenario1", load_bundled_scenario("scenario1"))]
    r1 = run_bench(scenarios, ["rrt"], runs=3, seed_base=7)
    r2 = run_bench(scenarios, ["rrt"], runs=3, seed_base=7)
    rec1 = r1.records[("rrt", "scenario1")]
    rec2 = r2.records[("rrt", "scenario1")]
    assert [x.success for x in rec1] == [x.success for x in rec2]
    assert [x.path_len_m for x in rec1] == [x.path_len_m for x in rec2]
    assert [x.clearance_m for x in rec1] == [x.clearance_m for x in rec2]
    row1 = r1.rows[0]
    row2 = r2.rows[0]
    assert (row1.successes, row1.mean_len_m, row1.mean_clearance_m) \
        == (row2.successes, row2.mean_len_m, row2.mean_clearance_m)


def test_bench_csv_roundtrip(tmp_path):
    scenarios = [("scenario1", load_bundled_scenario("scenario1"))]
    report = run_bench(scenarios, ["rrt", "rrt-kbf"], runs=2, seed_base=0)
    path = tmp_path / "bench.csv"
    write_bench_csv(report, path)
    assert path.read_text().splitlines()[0] == BENCH_CSV_HEADER
    rows = read_bench_csv(path)
    assert rows == report.rows
    assert "rrt" in format_bench_table(report)


def test_bench_parallel_matches_serial():
    scenarios = [("scenario1", load_bundled_scenario("scenario1"))]
    serial = run_bench(scenarios, ["rrt"], runs=4, seed_base=0, jobs=1)
    parallel = run_bench(scenarios, ["rrt"], runs=4, seed_base=0, jobs=2)
    a = serial.records[("rrt", "scenario1")]
    b = parallel.records[("rrt", "scenario1")]
    assert [x.path_len_m for x in a] == [x.path_len_m for x in b]


def test_bench_robust_bounds_forwarded():
    scenarios = [("scenario1", load_bundled_scenario("scenario1"))]
    r0 = run_bench(scenarios, ["robust-rrt-kbf"], runs=2, seed_base=0)
    r1 = run_bench(scenarios, ["robust-rrt-kbf"], runs=2, seed_base=0,
                   bounds=UncertaintyBounds(0.4, 0.3))
    a = r0.records[("robust-rrt-kbf", "scenario1")]
    b = r1.records[("robust-rrt-kbf", "scenario1")]
    assert [x.path_len_m for x in a] != [x.path_len_m for x in b]


def circle_count(path):
    tree = ET.parse(path)
    return sum(1 for el in tree.iter() if el.tag.endswith("circle"))


def test_svg_no_obstacles_no_circles(tmp_path):
    doc = dict(MINIMAL)
    s = load_scenario(write_json(tmp_path, doc))
    result = plan_rrt(s, np.random.default_rng(0))
    out = tmp_path / "plan.svg"
    emit_svg(result, s, out)
    assert circle_count(out) == 0


def test_svg_two_circles_per_obstacle(tmp_path):
    s = load_bundled_scenario("scenario1")  # 4 obstacles
    result = plan_rrt(s, np.random.default_rng(0))
    out = tmp_path / "plan.svg"
    emit_svg(result, s, out)
    assert circle_count(out) == 8


def test_svg_wellformed_for_random_runs(tmp_path):
    s = load_bundled_scenario("scenario2")
    for seed in range(20):
        result = plan_rrt(s, np.random.default_rng(seed))
        out = tmp_path / f"run{seed}.svg"
        emit_svg(result, s, out)
        ET.parse(out)  # raises on malformed XML


def test_svg_renders_trajectory(tmp_path):
    s = load_bundled_scenario("scenario1")
    from kbfplan.planners import plan_rrt_kbf
    result = plan_rrt_kbf(s, np.random.default_rng(0))
    traj = follow_path(result, s)
    out = tmp_path / "traj.svg"
    emit_svg(traj, s, out)
    ET.parse(out)
    assert circle_count(out) == 8


# -- command line entry ------------------------------------------------------

def test_main_plan_roundtrip(tmp_path):
    out = tmp_path / "plan.json"
    svg = tmp_path / "plan.svg"
    code = main(["plan", "--scenario", "scenario1", "--planner", "rrt-kbf",
                 "--seed", "0", "--out", str(out), "--svg", str(svg)])
    assert code == 0
    doc = json.loads(out.read_text())
    assert doc["planner"] == "rrt-kbf"
    assert doc["waypoints"][0]["t"] == 0.0
    ET.parse(svg)


def test_main_simulate(tmp_path):
    out = tmp_path / "traj.csv"
    code = main(["simulate", "--scenario", "scenario1", "--seed", "1",
                 "--out", str(out)])
    assert code == 0
    assert out.read_text().startswith("t,x,y,theta,v,c,a,minB,V,d")


def test_main_bench(tmp_path):
    out = tmp_path / "bench.csv"
    code = main(["bench", "--scenario", "scenario1", "--planner", "rrt",
                 "--runs", "2", "--out", str(out)])
    assert code == 0
    assert read_bench_csv(out)[0].runs == 2


def test_main_inject(tmp_path):
    out = tmp_path / "perturbed.json"
    code = main(["inject", "--scenario", "scenario1", "--seed", "3",
                 "--pos-err", "0.5", "--radius-err", "0.25", "--out", str(out)])
    assert code == 0
    s0 = load_bundled_scenario("scenario1")
    s1 = load_scenario(out)
    for o0, o1 in zip(s0.obstacles, s1.obstacles):
        assert math.hypot(o1.x - o0.x, o1.y - o0.y) == pytest.approx(0.5)


def test_main_exit_code_input_error(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert main(["plan", "--scenario", str(bad)]) == 2
    assert main(["plan", "--scenario", str(tmp_path / "missing.json")]) == 2


def test_main_exit_code_no_path(tmp_path):
    doc = {
        "start": {"x": 0.5, "y": 2.0},
        "goal": {"x": 4.5, "y": 2.0},
        "bounds": {"xmin": 0, "xmax": 5, "ymin": 0, "ymax": 4},
        "obstacles": [{"x": 2.5, "y": y, "r": 0.5} for y in
                      (0.0, 0.9, 1.8, 2.7, 3.6)],
        "planner": {"max_iters": 800},
    }
    path = write_json(tmp_path, doc, "walled.json")
    assert main(["plan", "--scenario", str(path), "--planner", "rrt"]) == 1
