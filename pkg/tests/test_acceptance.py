"""Acceptance suite: one test per criterion, each recording a verdict line.

The verdicts are printed in an "acceptance criteria" section at the end of
the pytest run (see ``conftest.pytest_terminal_summary``).
"""

import math
from dataclasses import replace

import numpy as np
import pytest
import scipy.sparse as sp
from shapely.geometry import Polygon, box

from harbordock.geometry import extract_convex_region, footprint_vertices
from harbordock.nlp import NlpProblem, SolveOptions, check_derivatives, solve, solve_qp
from harbordock.planner import (
    DockingOcp, DockingSpec, ThrusterForces, cost_to_go, plan, pseudo_huber,
)
from harbordock.scenario import Wind, load_scenario
from harbordock.sim import check_collision_free, run, summarize
from harbordock.vessel import BodyVelocity, Pose, VesselState

from .conftest import ACCEPTANCE, data_path

RANDOM_SEED = 2024
RANDOM_BOX = (-25.0, -5.0, -25.0, 0.0)  # north min/max, east min/max
SPEED_LIMITS = (1.0, 1.0, math.radians(5.0))
INTEGRAL_LIMITS = (150.0, 150.0, 200.0)
SLACK_TOL = 1e-6
DEFECT_TOL = 1e-6


def verdict(n, ok, detail):
    ACCEPTANCE[n] = (bool(ok), detail)
    assert ok, f"criterion {n}: {detail}"


def random_start_scenarios(base):
    rng = np.random.default_rng(RANDOM_SEED)
    n0, n1, e0, e1 = RANDOM_BOX
    out = []
    for k in range(5):
        pose = Pose(rng.uniform(n0, n1), rng.uniform(e0, e1), rng.uniform(-math.pi, math.pi))
        out.append(replace(base.with_initial_pose(pose), name=f"{base.name}_start{k}"))
    return out


@pytest.fixture(scope="module")
def random_runs(nominal_scenario):
    return [(sc, run(sc)) for sc in random_start_scenarios(nominal_scenario)]


@pytest.fixture(scope="module")
def windy_run(nominal_scenario):
    sc = replace(nominal_scenario, duration=60.0, name="windy",
                 wind=Wind((250.0, 120.0), 60.0, 12.0))
    return sc, run(sc)


def shapely_violations(poses, harbor, footprint):
    """Independent oracle: footprint polygons intersected with obstacle polygons."""
    obstacles = [Polygon(p) for p in harbor.obstacles]
    n0, n1, e0, e1 = harbor.world_bounds
    world = box(n0, e0, n1, e1)
    bad = 0
    for north, east, psi in poses:
        c, s = math.cos(psi), math.sin(psi)
        corners = [(north + c * x - s * y, east + s * x + c * y) for x, y in footprint.vertices]
        hull = Polygon(corners)
        if any(hull.intersection(o).area > 1e-9 for o in obstacles):
            bad += 1
        elif hull.difference(world).area > 1e-9:
            bad += 1
    return bad


# --- 1 ------------------------------------------------------------------------

def test_criterion_01_nominal_docking(nominal_scenario, timed_nominal):
    log, wall = timed_nominal
    s = summarize(nominal_scenario, log)
    pos, hdg = s["final_position_error"], s["final_heading_error_deg"]
    start = nominal_scenario.initial_state.pose
    dock = nominal_scenario.docking_pose
    dist = math.hypot(start.north - dock.north, start.east - dock.east)
    ok = (pos <= 0.5 and hdg <= 5.0 and nominal_scenario.duration <= 200.0 and wall <= 60.0
          and 35.0 <= dist <= 45.0)
    verdict(1, ok, f"start {dist:.1f} m out, final error {pos:.4f} m / {hdg:.3f} deg "
                   f"after {nominal_scenario.duration:.0f} s, wall time {wall:.1f} s")


# --- 2 ------------------------------------------------------------------------

def test_criterion_02_collision_free(nominal_scenario, nominal_log, random_runs, footprint):
    runs = [(nominal_scenario, nominal_log)] + random_runs
    counts, oracle = [], []
    for sc, log in runs:
        counts.append(check_collision_free(log, sc.harbor, footprint).violations)
        oracle.append(shapely_violations(log.poses, sc.harbor, footprint))
    ok = len(runs) == 6 and not any(counts) and not any(oracle)
    verdict(2, ok, f"{len(runs)} runs (nominal + 5 seeded starts), violations {counts}, "
                   f"oracle {oracle}")


# --- 3, 4 ---------------------------------------------------------------------

def _accepted_plans(runs):
    for sc, log in runs:
        for rec in log.plans:
            if rec.accepted:
                yield sc, rec, log.trajectories[rec.index]


def test_criterion_03_plan_constraints(nominal_scenario, nominal_log):
    f_max = nominal_scenario.params.f_max
    worst_speed = np.zeros(3)
    worst_norm = worst_slack = 0.0
    n = 0
    for _, rec, traj in _accepted_plans([(nominal_scenario, nominal_log)]):
        n += 1
        ts = np.linspace(traj.times[0], traj.times[-1], 2401)
        vel = np.array([traj.sample(t)[1] for t in ts])
        worst_speed = np.maximum(worst_speed, np.abs(vel).max(axis=0))
        u = traj.inputs
        worst_norm = max(worst_norm, np.hypot(u[:, 0], u[:, 1]).max(), np.hypot(u[:, 2], u[:, 3]).max())
        worst_slack = max(worst_slack, rec.max_slack, max(traj.slack_summary.values()))
    ok = (n == len(nominal_log.plans) and np.all(worst_speed <= SPEED_LIMITS)
          and worst_norm <= f_max * (1.0 + 1e-6) and worst_slack <= SLACK_TOL)
    verdict(3, ok, f"{n} plans: max |u| {worst_speed[0]:.3f}, |v| {worst_speed[1]:.3f} m/s, "
                   f"|r| {math.degrees(worst_speed[2]):.3f} deg/s, thruster norm "
                   f"{worst_norm:.4f}/{f_max:.0f} N, slack {worst_slack:.1e}")


def test_criterion_04_defects(nominal_scenario, nominal_log, random_runs):
    runs = [(nominal_scenario, nominal_log)] + random_runs
    defects = [rec.defect_norm for _, rec, _ in _accepted_plans(runs)]
    ok = bool(defects) and max(defects) <= DEFECT_TOL
    verdict(4, ok, f"{len(defects)} accepted solutions, max defect {max(defects):.2e}")


# --- 5 ------------------------------------------------------------------------

def test_criterion_05_derivatives(nominal_scenario, footprint):
    sc = nominal_scenario
    x0 = sc.initial_state.as_array()
    region = extract_convex_region(sc.harbor, x0[:2], sc.edge_budget)
    ocp = DockingOcp(x0, region, sc.spec, sc.params, footprint=footprint)
    prob = ocp.problem()
    z0 = ocp.initial_guess()
    rng = np.random.default_rng(5)
    worst, sparsity = 0.0, True
    for k in range(10):
        z = z0 + rng.normal(0.0, 0.3, size=z0.size)
        z[ocp.off_s:] = np.abs(z[ocp.off_s:])
        rep = check_derivatives(prob, z, seed=k, n_columns=150)
        worst = max(worst, rep.max_error)
        sparsity &= rep.sparsity_ok
    verdict(5, worst <= 1e-5 and sparsity,
            f"N={sc.spec.intervals_N} OCP ({prob.n_vars} vars), 10 points x 150 columns, "
            f"max relative error {worst:.2e}, sparsity {'ok' if sparsity else 'violated'}")


# --- 6 ------------------------------------------------------------------------

def test_criterion_06_solver_suite():
    errors = {}

    rng = np.random.default_rng(0)
    M = rng.normal(size=(5, 5))
    Q = M @ M.T + np.eye(5)
    c = rng.normal(size=5)
    quad = NlpProblem(n_vars=5, objective=lambda x: (0.5 * x @ Q @ x + c @ x, Q @ x + c),
                      hessian=lambda x, le, li: sp.csr_matrix(Q))
    res = solve(quad, np.full(5, 7.0))
    errors["quadratic"] = np.max(np.abs(res.x_star - np.linalg.solve(Q, -c))) if res.converged else np.inf

    def rosen(x):
        a, b = x
        return ((1 - a) ** 2 + 100 * (b - a * a) ** 2,
                np.array([-2 * (1 - a) - 400 * a * (b - a * a), 200 * (b - a * a)]))
    res = solve(NlpProblem(n_vars=2, objective=rosen), np.array([-1.2, 1.0]),
                SolveOptions(kkt_tolerance=1e-9))
    errors["rosenbrock"] = np.max(np.abs(res.x_star - 1.0)) if res.converged else np.inf

    # min x1^2 + x2^2 s.t. x1 + x2 = 1: x = (0.5, 0.5), multiplier -1
    qp = solve_qp(2 * np.eye(2), np.zeros(2), np.array([[1.0, 1.0]]), np.array([1.0]),
                  None, None, None, None)
    errors["kkt_qp"] = max(np.max(np.abs(qp.d - 0.5)), abs(qp.lam_eq[0] + 1.0)) if qp.optimal else np.inf

    ok = all(e <= 1e-6 for e in errors.values())
    verdict(6, ok, ", ".join(f"{k} {v:.1e}" for k, v in errors.items()))


# --- 7 ------------------------------------------------------------------------

def test_criterion_07_cost_values(params):
    ph = pseudo_huber((10.0, 0.0), 10.0)
    spec = DockingSpec(Pose(0.0, 0.0, 0.0))
    heading = cost_to_go(VesselState(Pose(0.0, 0.0, math.pi), BodyVelocity(0.0, 0.0, 0.0)),
                         ThrusterForces(), spec, params)
    goal = Pose(15.0, 18.1, 0.3)
    at_goal = cost_to_go(VesselState(goal, BodyVelocity(0.0, 0.0, 0.0)), ThrusterForces(),
                         DockingSpec(goal), params)
    ok = abs(ph - 100.0 * (math.sqrt(2.0) - 1.0)) <= 1e-9 and heading == 40.0 and at_goal == 0.0
    verdict(7, ok, f"pseudo_huber {ph!r}, heading term {heading!r}, at goal {at_goal!r}")


# --- 8 ------------------------------------------------------------------------

def test_criterion_08_anti_windup(nominal_scenario, nominal_log, random_runs, windy_run):
    runs = [(nominal_scenario, nominal_log)] + random_runs + [windy_run]
    peak = np.zeros(3)
    for _, log in runs:
        ints = np.column_stack([log.column(c) for c in ("int_x", "int_y", "int_n")])
        peak = np.maximum(peak, np.abs(ints).max(axis=0))
    ok = np.all(peak <= np.array(INTEGRAL_LIMITS) + 1e-9)
    verdict(8, ok, f"{len(runs)} runs incl. a 250 N wind case, peak integral "
                   f"({peak[0]:.1f} N, {peak[1]:.1f} N, {peak[2]:.1f} N m)")


# --- 9 ------------------------------------------------------------------------

def test_criterion_09_determinism(nominal_scenario, nominal_log, tmp_path):
    again = run(nominal_scenario)
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    nominal_log.write_csv(a)
    again.write_csv(b)
    same = a.read_bytes() == b.read_bytes()
    verdict(9, same, f"runlog.csv {a.stat().st_size} bytes, "
                     f"{'identical' if same else 'different'} across two nominal runs")


# --- 10 -----------------------------------------------------------------------

def test_criterion_10_solve_time(nominal_scenario, nominal_log):
    times = [p.solve_time for p in nominal_log.plans]
    st = summarize(nominal_scenario, nominal_log)["solve_time"]
    ok = max(times) <= 2.0 and nominal_scenario.spec.intervals_N == 60 and st["max"] == max(times)
    verdict(10, ok, f"{len(times)} solves at N=60: min {st['min']:.3f}, mean {st['mean']:.3f}, "
                    f"max {st['max']:.3f} s")


# --- 11 -----------------------------------------------------------------------

def test_criterion_11_goal_inside_obstacle(footprint):
    sc = load_scenario(data_path("goal_in_quay.json"))
    x0 = sc.initial_state.as_array()
    goal = sc.docking_pose
    hull = Polygon(footprint_vertices(goal, footprint))
    inside = any(hull.intersection(Polygon(p)).area > 0.0 for p in sc.harbor.obstacles)
    region = extract_convex_region(sc.harbor, x0[:2], sc.edge_budget)
    traj = plan(x0, region, sc.spec, sc.params, footprint=footprint)
    end = traj.poses[-1]
    margin = np.max(footprint_vertices(Pose(*end), footprint) @ region.A.T - region.b)
    slack = max(traj.slack_summary.values())
    dist = math.hypot(end[0] - goal.north, end[1] - goal.east)
    ok = inside and traj.solve_stats.converged and slack == 0.0 and abs(margin) <= 1e-6 and dist <= 2.0
    verdict(11, ok, f"requested pose overlaps the quay; converged {traj.solve_stats.converged}, "
                    f"slack {slack:.1e}, boundary gap {margin:.1e} m, {dist:.3f} m from request")
