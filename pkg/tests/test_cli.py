import csv
import json

import pytest

from harbordock.cli import build_parser, main

from .conftest import DATA, data_path


def write_short_scenario(tmp_path, duration=12.0):
    data = json.loads((DATA / "nominal.json").read_text())
    data["map"] = json.loads((DATA / "harbor.json").read_text())
    data["duration"] = duration
    data["name"] = "short"
    path = tmp_path / "short.json"
    path.write_text(json.dumps(data))
    return path


def test_validate_map_prints_counts_and_region(capsys):
    assert main(["validate-map", str(data_path("harbor.json")), "--point", "-15", "-10"]) == 0
    out = capsys.readouterr().out
    assert "3 obstacles" in out and "total area" in out
    assert "halfplanes" in out


def test_validate_map_reports_winding_fix(tmp_path, capsys):
    path = tmp_path / "cw.json"
    path.write_text(json.dumps({
        "world_bounds": {"north": [-10, 10], "east": [-10, 10]},
        "obstacles": [[[0, 0], [0, 1], [1, 1], [1, 0]]],
    }))
    assert main(["validate-map", str(path)]) == 0
    out = capsys.readouterr().out
    assert "reoriented 1" in out and "total area 1.00" in out


def test_validate_map_rejects_garbage(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text("{not json")
    assert main(["validate-map", str(path)]) == 1
    assert main(["validate-map", str(tmp_path / "missing.json")]) == 1


def test_validate_map_point_inside_obstacle(capsys):
    assert main(["validate-map", str(data_path("harbor.json")), "--point", "10", "25"]) == 1


def test_plan_once_writes_trajectory_and_dump(tmp_path, capsys):
    traj, dump = tmp_path / "traj.csv", tmp_path / "dbg.csv"
    rc = main(["plan-once", str(data_path("goal_in_quay.json")), "--out", str(traj),
               "--debug-dump", str(dump)])
    assert rc == 0
    out = capsys.readouterr().out
    assert "Converged" in out and "heading" in out
    with open(traj) as fh:
        rows = list(csv.DictReader(fh))
    assert float(rows[0]["north"]) == pytest.approx(8.0)
    assert float(rows[-1]["t"]) == pytest.approx(120.0)
    with open(dump) as fh:
        hist = list(csv.DictReader(fh))
    assert hist and list(hist[0]) == ["iteration", "objective", "infeasibility", "kkt",
                                      "step_norm", "alpha"]


def test_run_short_scenario_fails_thresholds(tmp_path, capsys):
    scenario = write_short_scenario(tmp_path)
    out_dir = tmp_path / "out"
    assert main(["run", str(scenario), "--out", str(out_dir)]) == 1
    assert "FAIL" in capsys.readouterr().out
    assert (out_dir / "runlog.csv").exists()
    assert sorted(p.name for p in (out_dir / "plans").iterdir()) == ["plan_0.csv", "plan_1.csv"]
    summary = json.loads((out_dir / "summary.json").read_text())
    assert summary["passed"] is False
    assert {"min", "mean", "max"} <= set(summary["solve_time"])


def test_sweep_over_files(tmp_path):
    scenario = write_short_scenario(tmp_path, duration=3.0)
    out_dir = tmp_path / "sweep"
    assert main(["sweep", str(scenario), str(scenario), "--out", str(out_dir)]) == 1
    rows = json.loads((out_dir / "sweep.json").read_text())
    assert [r["scenario"] for r in rows] == ["short", "short"]
    assert (out_dir / "00_short" / "summary.json").exists()
    assert (out_dir / "01_short" / "summary.json").exists()


def test_sweep_random_starts_needs_single_scenario(tmp_path):
    scenario = write_short_scenario(tmp_path, duration=3.0)
    assert main(["sweep", str(scenario), str(scenario), "--random-starts", "2",
                 "--out", str(tmp_path / "s")]) == 2


def test_parser_defaults():
    args = build_parser().parse_args(["sweep", "a.json", "--out", "o"])
    assert args.random_starts == 0 and tuple(args.box) == (-25.0, -5.0, -25.0, 0.0)
    with pytest.raises(SystemExit):
        build_parser().parse_args(["run", "a.json"])  # --out is required


def test_invalid_scenario_exit_code(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text(json.dumps({"name": "x"}))
    assert main(["run", str(path), "--out", str(tmp_path / "o")]) == 2
