"""Trajectory planning: solve the docking OCP and sample the result."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..geometry import ConvexRegion, Footprint
from ..nlp import SolveOptions, solve
from ..vessel import ModelParams, VesselState, planning_dynamics_batch
from .collocation import basis_values
from .ocp import NU, NX, DockingOcp
from .types import DockingSpec


@dataclass
class SolveStats:
    iterations: int
    solve_time: float
    converged: bool
    status: str
    infeasibility: float
    kkt_residual: float
    objective: float
    defect_norm: float
    history: list = field(default_factory=list, repr=False)


@dataclass
class PlannedTrajectory:
    """Planned motion sampled at the controller rate, plus the collocation data."""

    t0: float
    times: np.ndarray
    poses: np.ndarray
    velocities: np.ndarray
    accelerations: np.ndarray
    inputs: np.ndarray
    slack_summary: dict
    solve_stats: SolveStats
    node_states: np.ndarray = field(repr=False)
    interval_inputs: np.ndarray = field(repr=False)
    interval: float = 2.0
    degree: int = 3
    params: ModelParams | None = field(default=None, repr=False)

    @property
    def horizon_end(self) -> float:
        return self.t0 + self.interval * len(self.interval_inputs)

    def state_at(self, t) -> np.ndarray:
        """Planned state(s) from the collocation polynomials; clamped to the horizon."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        n_int = len(self.interval_inputs)
        s = np.clip((t - self.t0) / self.interval, 0.0, n_int)
        k = np.minimum(np.floor(s).astype(int), n_int - 1)
        tau = s - k
        L, _ = basis_values(tau, self.degree)
        per = self.degree + 1
        idx = k[:, None] * per + np.arange(per)[None, :]
        return np.einsum("mj,mjs->ms", L, self.node_states[idx])

    def input_at(self, t) -> np.ndarray:
        t = np.atleast_1d(np.asarray(t, dtype=float))
        n_int = len(self.interval_inputs)
        k = np.clip(np.floor((t - self.t0) / self.interval).astype(int), 0, n_int - 1)
        return self.interval_inputs[k]

    def sample(self, t):
        """``(pose, velocity, acceleration)`` reference at time ``t``.

        Past the horizon end the final pose is held at rest.
        """
        if t >= self.horizon_end:
            x = self.state_at(self.horizon_end)[0]
            return x[:3].copy(), np.zeros(3), np.zeros(3)
        x = self.state_at(t)[0]
        u = self.input_at(t)[0]
        acc = planning_dynamics_batch(x, u, self.params)[3:6]
        return x[:3].copy(), x[3:6].copy(), acc

    def polynomial_acceleration(self, t) -> np.ndarray:
        """Body acceleration from differentiating the collocation polynomial."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        n_int = len(self.interval_inputs)
        s = np.clip((t - self.t0) / self.interval, 0.0, n_int)
        k = np.minimum(np.floor(s).astype(int), n_int - 1)
        _, dL = basis_values(s - k, self.degree)
        per = self.degree + 1
        idx = k[:, None] * per + np.arange(per)[None, :]
        return np.einsum("mj,mjs->ms", dL, self.node_states[idx])[:, 3:6] / self.interval

    def write_csv(self, path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "north", "east", "heading", "surge", "sway", "yaw_rate",
                        "acc_surge", "acc_sway", "acc_yaw", "f_x1", "f_y1", "f_x2", "f_y2"])
            for row in np.column_stack([self.times, self.poses, self.velocities,
                                        self.accelerations, self.inputs]):
                w.writerow([repr(float(v)) for v in row])


class SolverNotConverged(RuntimeError):
    """Raised when the NLP solver stops without convergence.

    ``best`` is the trajectory built from the last iterate; ``violation`` its
    largest constraint violation.
    """

    def __init__(self, message, best: PlannedTrajectory, violation: float):
        super().__init__(message)
        self.best = best
        self.violation = violation


def default_solve_options(**overrides) -> SolveOptions:
    opts = dict(hessian_mode="gauss-newton", max_iterations=200,
                kkt_tolerance=1e-6, constraint_tolerance=1e-6,
                proximal_initial=1.0)
    opts.update(overrides)
    return SolveOptions(**opts)


def warm_start_guess(ocp: DockingOcp, previous: PlannedTrajectory, t0: float):
    """Previous plan shifted onto the new grid, tail-padded with the goal at rest."""
    node_t = np.concatenate([
        (np.arange(ocp.N)[:, None] + ocp.tau[None, :]).ravel(), [ocp.N]
    ]) * ocp.h + t0
    X = previous.state_at(node_t)
    goal = ocp.spec.docking_pose
    beyond = node_t > previous.horizon_end
    if np.any(beyond):
        X[beyond] = np.array([goal.north, goal.east, goal.heading, 0.0, 0.0, 0.0])
        # keep the heading branch continuous with the shifted part
        last = X[~beyond][-1, 2] if np.any(~beyond) else ocp.x0[2]
        X[beyond, 2] = last + np.angle(np.exp(1j * (goal.heading - last)))
    mid_t = t0 + (np.arange(ocp.N) + 0.5) * ocp.h
    U = previous.input_at(mid_t)
    U[mid_t > previous.horizon_end] = 0.0
    return ocp.initial_guess(X, U)


def _quintic(tau):
    tau = np.clip(tau, 0.0, 1.0)
    pos = tau**3 * (10.0 - 15.0 * tau + 6.0 * tau**2)
    vel = 30.0 * tau**2 * (1.0 - tau) ** 2
    acc = 60.0 * tau * (1.0 - tau) * (1.0 - 2.0 * tau)
    return pos, vel, acc


def cold_start_guess(ocp: DockingOcp, cruise_speed: float = 0.6) -> np.ndarray:
    """Smooth straight-line transfer toward the goal, kept inside the region.

    Inputs are fitted to the planning model along the path, so the guess is
    close to dynamically consistent and the first subproblems stay small.
    """
    spec, params = ocp.spec, ocp.params
    goal = spec.docking_pose
    p0 = ocp.x0[:2]
    target = np.array([goal.north, goal.east])
    direction = target - p0
    region = ocp.region
    if region.n_rows:
        # stop short of the region boundary by the footprint circumradius
        margin = float(np.max(np.linalg.norm(ocp.footprint.vertices, axis=1)))
        slack_b = region.b - margin - region.A @ p0
        rate = region.A @ direction
        t_hi = 1.0
        for sb, rt in zip(slack_b, rate):
            if rt > 1e-12 and sb >= 0.0:
                t_hi = min(t_hi, sb / rt)
        direction = direction * max(t_hi, 0.0)
    dist = float(np.linalg.norm(direction))
    psi0 = ocp.x0[2]
    dpsi = float(np.angle(np.exp(1j * (goal.heading - psi0))))
    yaw_rate = spec.velocity_bounds[2]
    T_move = max(1.875 * dist / cruise_speed, 1.875 * abs(dpsi) / (0.6 * yaw_rate), 10.0)
    T_move = min(T_move, 0.85 * spec.horizon_T)

    node_t = np.concatenate([(np.arange(ocp.N)[:, None] + ocp.tau[None, :]).ravel(), [ocp.N]]) * ocp.h
    pos, vel, _ = _quintic(node_t / T_move)
    psi = psi0 + dpsi * pos
    r = dpsi * vel / T_move
    pdot = direction[None, :] * (vel / T_move)[:, None]
    c, sn = np.cos(psi), np.sin(psi)
    X = np.zeros((ocp.n_nodes, NX))
    X[:, 0:2] = p0 + direction[None, :] * pos[:, None]
    X[:, 2] = psi
    X[:, 3] = c * pdot[:, 0] + sn * pdot[:, 1]
    X[:, 4] = -sn * pdot[:, 0] + c * pdot[:, 1]
    X[:, 5] = r

    # inputs: least-squares fit of the velocity dynamics at interval midpoints
    mid = (np.arange(ocp.N) + 0.5) * ocp.h
    pos_m, vel_m, acc_m = _quintic(mid / T_move)
    psi_m = psi0 + dpsi * pos_m
    c, sn = np.cos(psi_m), np.sin(psi_m)
    pdot = direction[None, :] * (vel_m / T_move)[:, None]
    pddot = direction[None, :] * (acc_m / T_move**2)[:, None]
    r_m = dpsi * vel_m / T_move
    xm = np.zeros((ocp.N, NX))
    xm[:, 2] = psi_m
    xm[:, 3] = c * pdot[:, 0] + sn * pdot[:, 1]
    xm[:, 4] = -sn * pdot[:, 0] + c * pdot[:, 1]
    xm[:, 5] = r_m
    # body-frame acceleration of the body velocity: d/dt (R^T pdot)
    nu_dot = np.zeros((ocp.N, 3))
    nu_dot[:, 0] = c * pddot[:, 0] + sn * pddot[:, 1] + r_m * xm[:, 4]
    nu_dot[:, 1] = -sn * pddot[:, 0] + c * pddot[:, 1] - r_m * xm[:, 3]
    nu_dot[:, 2] = dpsi * acc_m / T_move**2
    drift = planning_dynamics_batch(xm, np.zeros((ocp.N, NU)), params)[:, 3:6]
    mass = params.S_diag * np.array([params.m11, params.m22, params.m33])
    B_pinv = np.linalg.pinv(params.thrust_map)
    U = ((nu_dot - drift) * mass) @ B_pinv.T
    for i in (0, 2):
        norm = np.linalg.norm(U[:, i:i + 2], axis=1)
        scale = np.minimum(1.0, 0.95 * ocp.f_max / np.maximum(norm, 1e-12))
        U[:, i:i + 2] *= scale[:, None]
    return ocp.initial_guess(X, U)


def extract_trajectory(ocp: DockingOcp, z, t0: float, stats: SolveStats) -> PlannedTrajectory:
    X, U, _ = ocp.split(z)
    spec = ocp.spec
    n_samples = int(round(spec.horizon_T * spec.sample_rate))
    times = t0 + np.arange(n_samples + 1) / spec.sample_rate
    traj = PlannedTrajectory(
        t0=t0, times=times, poses=np.zeros((0, 3)), velocities=np.zeros((0, 3)),
        accelerations=np.zeros((0, 3)), inputs=np.zeros((0, NU)),
        slack_summary=ocp.slack_summary(z), solve_stats=stats,
        node_states=X.copy(), interval_inputs=U.copy(), interval=ocp.h,
        degree=ocp.d, params=ocp.params,
    )
    # the last sample sits exactly on the horizon end: evaluate it inside the last interval
    t_eval = np.minimum(times, traj.horizon_end)
    states = traj.state_at(t_eval)
    inputs = traj.input_at(np.minimum(times, traj.horizon_end - 1e-9))
    traj.poses = states[:, :3]
    traj.velocities = states[:, 3:6]
    traj.accelerations = planning_dynamics_batch(states, inputs, ocp.params)[:, 3:6]
    traj.inputs = inputs
    return traj


def plan(measured_state, region: ConvexRegion, spec: DockingSpec, params: ModelParams,
         warm_start: PlannedTrajectory | None = None, t0: float = 0.0,
         footprint: Footprint | None = None, options: SolveOptions | None = None
         ) -> PlannedTrajectory:
    """Solve the docking OCP from ``measured_state`` and return the sampled plan.

    Raises :class:`SolverNotConverged` (carrying the last iterate) when the
    solver stops early.
    """
    if isinstance(measured_state, VesselState):
        measured_state = measured_state.as_array()
    ocp = DockingOcp(measured_state, region, spec, params, footprint)
    if warm_start is not None:
        z0 = warm_start_guess(ocp, warm_start, t0)
    else:
        z0 = cold_start_guess(ocp)
    opts = options or default_solve_options()
    res = solve(ocp.problem(), z0, opts)
    stats = SolveStats(
        iterations=res.iterations, solve_time=res.solve_wall_time, converged=res.converged,
        status=res.status.value, infeasibility=res.primal_infeasibility,
        kkt_residual=res.kkt_residual, objective=res.objective,
        defect_norm=ocp.defect_norm(res.x_star), history=res.history,
    )
    traj = extract_trajectory(ocp, res.x_star, t0, stats)
    if not res.converged:
        raise SolverNotConverged(
            f"planner stopped with status {res.status.value} after {res.iterations} iterations",
            traj, res.primal_infeasibility)
    return traj
