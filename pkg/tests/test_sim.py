import json
import math
from dataclasses import replace

import numpy as np
import pytest

import harbordock.sim as sim_mod
from harbordock.geometry import HarborMap
from harbordock.planner import SolverNotConverged
from harbordock.scenario import Noise, Wind
from harbordock.sim import (
    RUNLOG_COLUMNS, _rk4, check_collision_free, run, summarize, write_outputs,
)
from harbordock.vessel import BodyVelocity, ModelParams, Pose, VesselState, plant_inertia


@pytest.fixture(scope="module")
def short_scenario(nominal_scenario):
    return replace(nominal_scenario, duration=25.0, name="short")


@pytest.fixture(scope="module")
def short_log(short_scenario):
    return run(short_scenario)


# --- schedule and log structure -------------------------------------------------

def test_rate_schedule(nominal_scenario, nominal_log):
    dur = nominal_scenario.duration
    assert abs(len(nominal_log.rows) - dur * 10) <= 1
    assert abs(len(nominal_log.plans) - dur / 10) <= 1
    t = nominal_log.times
    assert np.all(np.diff(t) > 0)
    assert np.allclose(np.diff(t), 0.1)
    requested = [p.requested_at for p in nominal_log.plans]
    assert np.allclose(np.diff(requested), 10.0)


def test_columns_documented_order(short_log):
    assert short_log.columns == RUNLOG_COLUMNS
    assert short_log.columns[0] == "t" and short_log.columns[-1] == "plan_index"
    assert short_log.data.shape[1] == len(RUNLOG_COLUMNS)


def test_first_plan_active_from_start(short_log):
    assert short_log.column("plan_index")[0] == 0.0
    assert short_log.plans[0].activated_at == 0.0


def test_reference_jump_equals_tracking_error(nominal_log):
    switched = [p for p in nominal_log.plans if p.reference_jump is not None]
    assert switched
    for p in switched:
        assert p.reference_jump == pytest.approx(p.tracking_error, abs=1e-6)


@pytest.mark.xfail(strict=True, reason=(
    "default gains with a Coriolis-free feed-forward leave 0.3-0.5 m of tracking "
    "error while turning at speed"))
def test_reference_jump_within_bound(nominal_log):
    jumps = [p.reference_jump for p in nominal_log.plans if p.reference_jump is not None]
    assert max(jumps) <= 0.2


def test_dock_at_rest_stays_put(nominal_scenario):
    dock = nominal_scenario.docking_pose
    sc = replace(nominal_scenario, duration=60.0,
                 initial_state=VesselState(dock, BodyVelocity(0.0, 0.0, 0.0)))
    log = run(sc)
    p = log.poses
    dev = np.hypot(p[:, 0] - dock.north, p[:, 1] - dock.east)
    assert dev.max() <= 0.1


def test_short_run_deterministic(short_scenario, short_log, tmp_path):
    again = run(short_scenario)
    short_log.write_csv(tmp_path / "a.csv")
    again.write_csv(tmp_path / "b.csv")
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()


def test_noise_is_seeded(short_scenario, tmp_path):
    sc = replace(short_scenario, duration=12.0,
                 noise=Noise((0.05, 0.05, 0.005), (0.01, 0.01, 0.001)))
    a, b = run(sc), run(sc)
    c = run(replace(sc, seed=sc.seed + 1))
    assert a.rows == b.rows
    assert a.rows != c.rows


# --- plant ----------------------------------------------------------------------

@pytest.mark.parametrize("nu", [(1.0, 0.3, 0.05), (-0.5, 0.8, -0.1), (0.0, 0.0, 0.2)])
def test_unforced_plant_energy_non_increasing(nu):
    p = ModelParams(m22=2900.0)
    M = plant_inertia(p)
    x = np.array([0.0, 0.0, 0.3, *nu])
    act = np.zeros(4)
    cmd = np.zeros(4)
    energy = [0.5 * x[3:] @ M @ x[3:]]
    for k in range(2000):
        x, act = _rk4(x, act, cmd, p, Wind(), 0.0, k * 0.01, 0.01)
        energy.append(0.5 * x[3:] @ M @ x[3:])
    assert np.all(np.diff(energy) <= 1e-12)


# --- solver failure and latency -------------------------------------------------

def test_failed_replan_keeps_previous_plan(short_scenario, monkeypatch):
    real_plan = sim_mod.plan
    calls = {"n": 0}

    def flaky(*args, **kwargs):
        calls["n"] += 1
        traj = real_plan(*args, **kwargs)
        if calls["n"] == 2:
            raise SolverNotConverged("forced failure", traj, 1.0)
        return traj

    monkeypatch.setattr(sim_mod, "plan", flaky)
    log = run(short_scenario)
    assert [p.accepted for p in log.plans] == [True, False, True]
    rejected = [e for e in log.events if e["event"] == "plan_rejected"]
    assert len(rejected) == 1 and rejected[0]["plan"] == 1
    idx = log.column("plan_index")
    t = log.times
    assert np.all(idx[(t >= 10.0) & (t < 20.0)] == 0)
    assert np.all(idx[t >= 20.0] == 2)


def test_measured_latency_delays_activation(short_scenario):
    log = run(replace(short_scenario, plan_latency_mode="measured"))
    first, second = log.plans[0], log.plans[1]
    assert first.activated_at == 0.0
    assert second.activated_at >= second.requested_at + second.solve_time - 1e-9
    assert second.activated_at <= second.requested_at + second.solve_time + 0.1 + 1e-9


def test_wind_run_completes(short_scenario, footprint):
    sc = replace(short_scenario, wind=Wind((40.0, -30.0), 20.0, 15.0))
    log = run(sc)
    calm = run(short_scenario)
    assert len(log.rows) == len(calm.rows)
    assert not np.allclose(log.poses, calm.poses)


# --- collision check ------------------------------------------------------------

def test_nominal_run_collision_free(nominal_scenario, nominal_log, footprint):
    assert check_collision_free(nominal_log, nominal_scenario.harbor, footprint).violations == 0


def test_synthetic_pose_inside_quay_flagged(harbor, footprint):
    poses = np.array([[0.0, 0.0, 0.0], [10.0, 25.0, 0.0], [0.0, 0.0, 0.0]])
    rep = check_collision_free(poses, harbor, footprint)
    assert rep.violations == 1 and rep.first_violation_time == 1.0
    assert not rep.collision_free


def test_obstacle_corner_inside_footprint_flagged(footprint):
    # a thin spike poking into the hull without any hull vertex inside it
    spike = [[-0.2, -10.0], [0.2, -10.0], [0.0, 0.5]]
    m = HarborMap.from_polygons([spike], (-20, 20, -20, 20))
    assert check_collision_free(np.array([[0.0, 0.0, 0.0]]), m, footprint).violations == 1


def test_empty_map_never_collides(footprint):
    m = HarborMap.from_polygons([], (-100, 100, -100, 100))
    rng = np.random.default_rng(3)
    poses = rng.uniform(-50, 50, size=(200, 3))
    assert check_collision_free(poses, m, footprint).violations == 0


# --- outputs --------------------------------------------------------------------

def test_write_outputs(short_scenario, short_log, tmp_path):
    summary = write_outputs(short_scenario, short_log, tmp_path)
    assert (tmp_path / "runlog.csv").read_text().splitlines()[0] == ",".join(RUNLOG_COLUMNS)
    assert sorted(p.name for p in (tmp_path / "plans").iterdir()) == \
        ["plan_0.csv", "plan_1.csv", "plan_2.csv"]
    on_disk = json.loads((tmp_path / "summary.json").read_text())
    for key in ("final_position_error", "collision_violations", "solve_time", "passed"):
        assert key in on_disk
    st = on_disk["solve_time"]
    assert st["min"] <= st["mean"] <= st["max"] and st["count"] == 3
    assert sum(st["histogram"]["counts"]) == 3
    assert len(on_disk["plan_records"]) == 3
    assert summary["passed"] is False  # 25 s is not long enough to dock
    json.loads((tmp_path / "events.json").read_text())


def test_summary_thresholds(nominal_scenario, nominal_log):
    s = summarize(nominal_scenario, nominal_log)
    assert s["checks"]["final_position"] == (s["final_position_error"] <= 0.5)
    assert s["final_heading_error_deg"] == pytest.approx(
        math.degrees(abs(nominal_log.poses[-1][2] - nominal_scenario.docking_pose.heading)), abs=1e-9)
