"""Multi-rate closed-loop docking simulation.

The plant is integrated with fixed-step RK4, the DP controller runs at the
control rate with zero-order-hold actuator commands, and the planner is
called every ``replan_period`` seconds from the measured state.
"""

from __future__ import annotations

import csv
import json
import math
import time as _time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .allocation import allocate
from .control import ControllerState, Reference, control, pose_error
from .geometry import Footprint, GeometryError, footprint_vertices, point_in_polygon, \
    extract_convex_region
from .planner import PlannedTrajectory, SolverNotConverged, plan
from .planner.ocp import InvalidRegion
from .scenario import Scenario
from .vessel import ActuatorCommands, Pose, simulation_dynamics, wrap_angle

RUNLOG_COLUMNS = (
    "t",
    "north", "east", "heading", "surge", "sway", "yaw_rate",
    "ref_north", "ref_east", "ref_heading", "ref_surge", "ref_sway", "ref_yaw_rate",
    "ref_acc_surge", "ref_acc_sway", "ref_acc_yaw",
    "err_north", "err_east", "err_heading",
    "tau_x", "tau_y", "tau_n",
    "int_x", "int_y", "int_n",
    "az1", "az2", "n1", "n2",
    "cmd_az1", "cmd_az2", "cmd_n1", "cmd_n2",
    "sat1", "sat2", "plan_index",
)
"""Column order of ``runlog.csv``.

Poses are Earth-fixed (m, m, rad), velocities body-fixed (m/s, m/s, rad/s);
``ref_*`` is the active plan sampled at ``t``; ``err_*`` the pose error fed
to the controller; ``tau_*`` the commanded body force (N, N, N*m); ``int_*``
the integral contribution after the update; ``az*``/``n*`` the actual
thruster azimuths (rad) and propeller speeds (rev/s) at ``t``; ``cmd_*``
the commands issued at ``t``; ``sat*`` is 1 when a thruster was clipped;
``plan_index`` the index of the plan being tracked.
"""


@dataclass
class PlanRecord:
    index: int
    requested_at: float
    activated_at: float | None
    accepted: bool
    status: str
    solve_time: float
    iterations: int
    max_slack: float
    slack: dict
    defect_norm: float
    max_speeds: list
    max_thruster_norm: float
    region_rows: int
    reference_jump: float | None = None
    tracking_error: float | None = None


@dataclass
class RunLog:
    scenario_name: str
    columns: tuple = RUNLOG_COLUMNS
    rows: list = field(default_factory=list)
    plans: list = field(default_factory=list)
    trajectories: dict = field(default_factory=dict, repr=False)
    events: list = field(default_factory=list)

    @property
    def data(self) -> np.ndarray:
        return np.asarray(self.rows, dtype=float).reshape(-1, len(self.columns))

    def column(self, name: str) -> np.ndarray:
        return self.data[:, self.columns.index(name)]

    @property
    def times(self) -> np.ndarray:
        return self.column("t")

    @property
    def poses(self) -> np.ndarray:
        d = self.data
        i = self.columns.index("north")
        return d[:, i:i + 3]

    def write_csv(self, path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(self.columns)
            for row in self.rows:
                w.writerow([repr(float(v)) for v in row])


def _rk4(x, a, cmd, params, wind, phase, t, dt):
    def f(xx, aa, tt):
        dist = None if wind.calm else wind.force_at(tt, phase)
        return simulation_dynamics(xx, aa, cmd, params, dist)

    k1x, k1a = f(x, a, t)
    k2x, k2a = f(x + 0.5 * dt * k1x, a + 0.5 * dt * k1a, t + 0.5 * dt)
    k3x, k3a = f(x + 0.5 * dt * k2x, a + 0.5 * dt * k2a, t + 0.5 * dt)
    k4x, k4a = f(x + dt * k3x, a + dt * k3a, t + dt)
    x_new = x + dt / 6.0 * (k1x + 2 * k2x + 2 * k3x + k4x)
    a_new = a + dt / 6.0 * (k1a + 2 * k2a + 2 * k3a + k4a)
    return x_new, a_new


def _plan_record(index, t, traj: PlannedTrajectory | None, accepted, status, solve_time,
                 iterations, region_rows) -> PlanRecord:
    if traj is None:
        return PlanRecord(index, t, None, False, status, solve_time, iterations, math.nan,
                          {}, math.nan, [math.nan] * 3, math.nan, region_rows)
    norms = np.hypot(traj.inputs[:, 0::2], traj.inputs[:, 1::2])
    return PlanRecord(
        index=index, requested_at=t, activated_at=None, accepted=accepted, status=status,
        solve_time=solve_time, iterations=iterations,
        max_slack=max(traj.slack_summary.values()), slack=dict(traj.slack_summary),
        defect_norm=traj.solve_stats.defect_norm,
        max_speeds=np.abs(traj.velocities).max(axis=0).tolist(),
        max_thruster_norm=float(norms.max()), region_rows=region_rows,
    )


def run(scenario: Scenario, keep_trajectories: bool = True) -> RunLog:
    """Simulate ``scenario`` and return the log.

    Solver failures never abort the run: the previous plan is kept and an
    event recorded.  With ``plan_latency_mode == "measured"`` a new plan is
    activated at the first control tick after its own solve wall time; the
    very first plan is always activated immediately (the vessel waits for it).
    """
    sc = scenario
    params, spec = sc.params, sc.spec
    footprint = Footprint.rectangle(params.footprint_length, params.footprint_width)
    rng = np.random.default_rng(sc.seed)
    phase = float(rng.uniform(0.0, 2.0 * math.pi))

    substeps = int(round(sc.integration_rate / sc.control_rate))
    dt_ctrl = 1.0 / sc.control_rate
    dt_plant = dt_ctrl / substeps
    n_ticks = int(math.floor(sc.duration * sc.control_rate + 1e-9))
    replan_every = int(round(sc.replan_period * sc.control_rate))

    x = sc.initial_state.as_array().astype(float)
    act = np.zeros(4)
    commands = ActuatorCommands((0.0, 0.0), (0.0, 0.0))
    ctrl_state = ControllerState()
    log = RunLog(sc.name)

    active: PlannedTrajectory | None = None
    active_index = -1
    pending: tuple | None = None  # (activation time, trajectory, record)
    latest: PlannedTrajectory | None = None

    def measure(xx):
        if not sc.noise.enabled:
            return xx.copy()
        noise = np.concatenate([rng.normal(0.0, sc.noise.pose_std),
                                rng.normal(0.0, sc.noise.velocity_std)])
        return xx + noise

    def activate(traj, record, t, measured):
        nonlocal active, active_index, ctrl_state
        if active is not None:
            old_ref, _, _ = active.sample(t)
            new_ref, _, _ = traj.sample(t)
            record.reference_jump = float(np.hypot(*(new_ref[:2] - old_ref[:2])))
            record.tracking_error = float(np.hypot(*(measured[:2] - old_ref[:2])))
        active, active_index = traj, record.index
        record.activated_at = t
        log.events.append({"t": t, "event": "plan_activated", "plan": record.index})
        if sc.reset_integral_on_replan:
            ctrl_state = ControllerState(np.zeros(3), ctrl_state.last_time)

    for tick in range(n_ticks + 1):
        t = tick * dt_ctrl
        measured = measure(x)

        if tick % replan_every == 0:
            k = len(log.plans)
            wall0 = _time.perf_counter()
            traj, status, iters, rows = None, "ok", 0, 0
            try:
                region = extract_convex_region(sc.harbor, measured[:2], sc.edge_budget)
                rows = region.n_rows
                traj = plan(measured, region, spec, params, warm_start=latest, t0=t,
                            footprint=footprint)
                status = traj.solve_stats.status
                iters = traj.solve_stats.iterations
            except SolverNotConverged as exc:
                status, iters = str(exc), exc.best.solve_stats.iterations
            except (GeometryError, InvalidRegion) as exc:
                status = f"{type(exc).__name__}: {exc}"
            solve_time = _time.perf_counter() - wall0
            record = _plan_record(k, t, traj, traj is not None, status, solve_time, iters, rows)
            if traj is None:
                log.events.append({"t": t, "event": "plan_rejected", "plan": k, "reason": status})
            log.plans.append(record)
            if traj is not None:
                latest = traj
                if keep_trajectories:
                    log.trajectories[k] = traj
                log.events.append({"t": t, "event": "plan_accepted", "plan": k})
                if sc.plan_latency_mode == "zero" or active is None:
                    pending = None
                    activate(traj, record, t, measured)
                else:
                    pending = (t + solve_time, traj, record)

        if pending is not None and t >= pending[0] - 1e-12:
            activate(pending[1], pending[2], t, measured)
            pending = None

        if active is not None:
            eta_p, nu_p, acc_p = active.sample(t)
        else:
            # no plan yet: hold the initial pose
            eta_p, nu_p, acc_p = sc.initial_state.as_array()[:3], np.zeros(3), np.zeros(3)
        ref = Reference(eta_p, nu_p, acc_p)
        err = pose_error(measured[:3], eta_p)
        tau_c, ctrl_state = control(measured, ref, ctrl_state, sc.gains, params, dt_ctrl, t)
        alloc = allocate(tau_c, params, previous=commands)
        commands = alloc.commands

        log.rows.append([
            t, *x, *eta_p, *nu_p, *acc_p, *err, *tau_c, *ctrl_state.integral_term,
            *act, *commands.azimuth_commands, *commands.speed_commands,
            float(alloc.saturated[0]), float(alloc.saturated[1]), float(active_index),
        ])
        if any(alloc.saturated):
            # saturation is silent for the controller but counted
            log.events.append({"t": t, "event": "saturation",
                               "thrusters": [i for i, s in enumerate(alloc.saturated) if s]})

        if tick == n_ticks:
            break
        cmd = commands.as_array()
        for s in range(substeps):
            x, act = _rk4(x, act, cmd, params, sc.wind, phase, t + s * dt_plant, dt_plant)
        x[2] = wrap_angle(x[2])
    return log


# --- post-processing --------------------------------------------------------

@dataclass
class CollisionReport:
    samples: int
    violations: int
    first_violation_time: float | None
    details: list = field(default_factory=list)

    @property
    def collision_free(self) -> bool:
        return self.violations == 0


def check_collision_free(log_or_poses, harbor, footprint: Footprint, times=None,
                         max_details: int = 20) -> CollisionReport:
    """Count logged poses whose footprint overlaps an obstacle.

    A pose counts as a violation when a footprint vertex lies inside an
    obstacle polygon, or an obstacle vertex lies inside the footprint (a
    pier corner poking into the hull side).  Uses plain point-in-polygon
    tests only.
    """
    if isinstance(log_or_poses, RunLog):
        poses, times = log_or_poses.poses, log_or_poses.times
    else:
        poses = np.asarray(log_or_poses, dtype=float).reshape(-1, 3)
        times = np.arange(len(poses), dtype=float) if times is None else np.asarray(times)
    violations, first, details = 0, None, []
    for t, p in zip(times, poses):
        verts = footprint_vertices(Pose(*p), footprint)
        hit = None
        for k, obs in enumerate(harbor.obstacles):
            if any(point_in_polygon(v, obs) for v in verts) or \
                    any(point_in_polygon(v, verts) for v in obs):
                hit = k
                break
        if hit is not None:
            violations += 1
            if first is None:
                first = float(t)
            if len(details) < max_details:
                details.append({"t": float(t), "obstacle": hit, "pose": p.tolist()})
    return CollisionReport(len(poses), violations, first, details)


def summarize(scenario: Scenario, log: RunLog) -> dict:
    """Scalar results of a run plus pass/fail against the scenario thresholds."""
    params = scenario.params
    footprint = Footprint.rectangle(params.footprint_length, params.footprint_width)
    goal = scenario.docking_pose.as_array()
    final = log.poses[-1]
    pos_err = float(np.hypot(*(final[:2] - goal[:2])))
    head_err = abs(float(wrap_angle(final[2] - goal[2])))
    report = check_collision_free(log, scenario.harbor, footprint)

    accepted = [p for p in log.plans if p.accepted]
    times = np.array([p.solve_time for p in log.plans]) if log.plans else np.zeros(0)
    if len(times):
        counts, edges = np.histogram(times, bins=10)
        hist = {"edges": edges.tolist(), "counts": counts.tolist()}
        st = {"min": float(times.min()), "mean": float(times.mean()), "max": float(times.max()),
              "count": int(len(times)), "histogram": hist}
    else:
        st = {"min": None, "mean": None, "max": None, "count": 0, "histogram": None}
    integral = np.abs(np.column_stack([log.column(c) for c in ("int_x", "int_y", "int_n")]))
    th = scenario.thresholds
    checks = {
        "final_position": pos_err <= th.position,
        "final_heading": head_err <= th.heading,
        "collisions": report.violations <= th.max_violations,
        "solve_time": bool(len(times)) and float(times.max()) <= th.solve_time,
    }
    jumps = [p.reference_jump for p in log.plans if p.reference_jump is not None]
    return {
        "scenario": scenario.name,
        "seed": scenario.seed,
        "duration": scenario.duration,
        "final_position_error": pos_err,
        "final_heading_error_deg": math.degrees(head_err),
        "final_pose": {"north": float(final[0]), "east": float(final[1]),
                       "heading_deg": math.degrees(float(final[2]))},
        "collision_violations": report.violations,
        "first_violation_time": report.first_violation_time,
        "solve_time": st,
        "plans": {"requested": len(log.plans), "accepted": len(accepted),
                  "rejected": len(log.plans) - len(accepted)},
        "max_slack": max((p.max_slack for p in accepted), default=None),
        "max_defect": max((p.defect_norm for p in accepted), default=None),
        "max_planned_speeds": (np.max([p.max_speeds for p in accepted], axis=0).tolist()
                               if accepted else None),
        "max_integral_abs": integral.max(axis=0).tolist(),
        "max_reference_jump": max(jumps, default=None),
        "saturation_ticks": sum(1 for e in log.events if e["event"] == "saturation"),
        "checks": checks,
        "passed": all(checks.values()),
    }


def write_outputs(scenario: Scenario, log: RunLog, out_dir) -> dict:
    """Write ``runlog.csv``, ``plans/plan_k.csv``, ``events.json`` and ``summary.json``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    log.write_csv(out / "runlog.csv")
    for k, traj in sorted(log.trajectories.items()):
        traj.write_csv(out / "plans" / f"plan_{k}.csv")
    summary = summarize(scenario, log)
    summary["plan_records"] = [vars(p) for p in log.plans]
    (out / "summary.json").write_text(json.dumps(summary, indent=2, default=float) + "\n")
    (out / "events.json").write_text(json.dumps(log.events, indent=1) + "\n")
    return summary
