"""Vessel models for a twin-azimuth surface vessel.

Three kinetic models share the same kinematics ``eta_dot = R(psi) nu``:

* the simulation plant (full inertia, optional sway/yaw coupling, actuator lag),
* the planning model (diagonal inertia amplified by ``S``, diagonal Coriolis
  and damping, forces decomposed per thruster as inputs),
* the tracking feed-forward model (diagonal inertia and damping, no Coriolis).

State vectors are ordered ``[north, east, heading, surge, sway, yaw_rate]``.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, fields
from importlib import resources
from pathlib import Path

import numpy as np


def wrap_angle(angle):
    """Wrap an angle (scalar or array) to the interval (-pi, pi]."""
    wrapped = np.mod(np.asarray(angle, dtype=float) + np.pi, 2.0 * np.pi) - np.pi
    wrapped = np.where(wrapped <= -np.pi, wrapped + 2.0 * np.pi, wrapped)
    if np.ndim(wrapped) == 0:
        return float(wrapped)
    return wrapped


@dataclass(frozen=True)
class Pose:
    north: float
    east: float
    heading: float

    def as_array(self) -> np.ndarray:
        return np.array([self.north, self.east, self.heading])


@dataclass(frozen=True)
class BodyVelocity:
    surge: float = 0.0
    sway: float = 0.0
    yaw_rate: float = 0.0

    def as_array(self) -> np.ndarray:
        return np.array([self.surge, self.sway, self.yaw_rate])


@dataclass(frozen=True)
class VesselState:
    pose: Pose
    velocity: BodyVelocity = BodyVelocity()

    def as_array(self) -> np.ndarray:
        return np.concatenate([self.pose.as_array(), self.velocity.as_array()])

    @classmethod
    def from_array(cls, x) -> "VesselState":
        x = np.asarray(x, dtype=float)
        return cls(Pose(*map(float, x[:3])), BodyVelocity(*map(float, x[3:6])))


@dataclass(frozen=True)
class ActuatorState:
    """Actual azimuth angles (rad) and propeller speeds (rev/s) of both thrusters."""

    azimuth_angles: tuple[float, float] = (0.0, 0.0)
    propeller_speeds: tuple[float, float] = (0.0, 0.0)

    def as_array(self) -> np.ndarray:
        return np.array([*self.azimuth_angles, *self.propeller_speeds], dtype=float)

    @classmethod
    def from_array(cls, a) -> "ActuatorState":
        a = np.asarray(a, dtype=float)
        return cls((wrap_angle(a[0]), wrap_angle(a[1])), (float(a[2]), float(a[3])))


@dataclass(frozen=True)
class ActuatorCommands:
    azimuth_commands: tuple[float, float] = (0.0, 0.0)
    speed_commands: tuple[float, float] = (0.0, 0.0)

    def as_array(self) -> np.ndarray:
        return np.array([*self.azimuth_commands, *self.speed_commands], dtype=float)


class InvalidParameters(ValueError):
    pass


@dataclass(frozen=True)
class ModelParams:
    """Vessel parameters in SI units.

    Damping coefficients follow the usual hydrodynamic sign convention
    (negative numbers), so that e.g. ``d11(u) = -X_u - X_uu |u| - X_uuu u^2``.
    ``m23``, ``Y_r`` and ``N_v`` are plant-only sway/yaw couplings; the planning
    and tracking models ignore them.
    """

    m11: float = 2400.0
    m22: float = 2400.0
    m33: float = 4900.0
    X_u: float = -70.0
    X_uu: float = -150.0
    X_uuu: float = -60.0
    Y_v: float = -120.0
    Y_vv: float = -400.0
    Y_vvv: float = -100.0
    N_r: float = -400.0
    N_rr: float = -300.0
    s11: float = 2.5
    s22: float = 2.5
    s33: float = 5.0
    l1: float = 1.8
    l2: float = -1.8
    f_max: float = 500.0
    k_t: float = 1.25
    n_max: float = 20.0
    azimuth_rate_limit: float = math.radians(60.0)
    azimuth_time_constant: float = 0.2
    speed_time_constant: float = 0.5
    footprint_length: float = 5.0
    footprint_width: float = 2.8
    m23: float = 0.0
    Y_r: float = 0.0
    N_v: float = 0.0

    def __post_init__(self):
        for name in ("m11", "m22", "m33", "f_max", "k_t", "n_max", "azimuth_rate_limit",
                     "azimuth_time_constant", "speed_time_constant",
                     "footprint_length", "footprint_width"):
            if not getattr(self, name) > 0:
                raise InvalidParameters(f"{name} must be positive")
        # d_ii(.) > 0 everywhere needs a positive linear term and non-negative higher terms
        for lin, *rest in (("X_u", "X_uu", "X_uuu"), ("Y_v", "Y_vv", "Y_vvv"), ("N_r", "N_rr")):
            if not getattr(self, lin) < 0:
                raise InvalidParameters(f"{lin} must be negative (positive damping)")
            for name in rest:
                if getattr(self, name) > 0:
                    raise InvalidParameters(f"{name} must be non-positive")
        if min(self.s11, self.s22, self.s33) < 1.0:
            raise InvalidParameters("S diagonal entries must be >= 1")
        if self.m22 * self.m33 - self.m23**2 <= 0:
            raise InvalidParameters("plant inertia matrix must be positive definite")

    @property
    def S_diag(self) -> np.ndarray:
        return np.array([self.s11, self.s22, self.s33])

    @property
    def M_p(self) -> np.ndarray:
        return np.diag([self.m11, self.m22, self.m33])

    @property
    def thrust_map(self) -> np.ndarray:
        """Matrix mapping ``[f_x1, f_y1, f_x2, f_y2]`` to surge/sway/yaw force."""
        return np.array([
            [1.0, 0.0, 1.0, 0.0],
            [0.0, 1.0, 0.0, 1.0],
            [0.0, self.l1, 0.0, self.l2],
        ])

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "ModelParams":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise InvalidParameters(f"unknown parameter keys: {', '.join(unknown)}")
        return cls(**{k: float(v) for k, v in data.items()})

    @classmethod
    def load(cls, path: str | Path | None = None) -> "ModelParams":
        """Load a JSON parameter file; ``None`` loads the bundled surrogate values."""
        if path is None:
            text = resources.files("harbordock.data").joinpath("default_params.json").read_text()
        else:
            text = Path(path).read_text()
        return cls.from_dict(json.loads(text))


def rotation_matrix(heading: float) -> np.ndarray:
    c, s = math.cos(heading), math.sin(heading)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def damping_diag(nu, params: ModelParams) -> np.ndarray:
    """Diagonal of ``D_p(nu)``; works on a 3-vector or an ``(..., 3)`` array."""
    nu = np.asarray(nu, dtype=float)
    u, v, r = nu[..., 0], nu[..., 1], nu[..., 2]
    d11 = -params.X_u - params.X_uu * np.abs(u) - params.X_uuu * u**2
    d22 = -params.Y_v - params.Y_vv * np.abs(v) - params.Y_vvv * v**2
    d33 = -params.N_r - params.N_rr * np.abs(r)
    return np.stack([d11, d22, d33], axis=-1)


def coriolis_planning(nu, params: ModelParams) -> np.ndarray:
    """Skew-symmetric ``C_p(nu)`` of the diagonal planning model."""
    u, v, _ = np.asarray(nu, dtype=float)
    m11, m22 = params.m11, params.m22
    return np.array([
        [0.0, 0.0, -m22 * v],
        [0.0, 0.0, m11 * u],
        [m22 * v, -m11 * u, 0.0],
    ])


def planning_dynamics_batch(x, u_p, params: ModelParams) -> np.ndarray:
    """Vectorised planning model: ``x`` is ``(..., 6)``, ``u_p`` is ``(..., 4)``."""
    x = np.asarray(x, dtype=float)
    u_p = np.asarray(u_p, dtype=float)
    psi = x[..., 2]
    u, v, r = x[..., 3], x[..., 4], x[..., 5]
    c, s = np.cos(psi), np.sin(psi)
    tau = u_p @ params.thrust_map.T
    d = damping_diag(x[..., 3:6], params)
    m11, m22, m33 = params.m11, params.m22, params.m33
    # -C_p(nu) nu
    cor = np.stack([m22 * v * r, -m11 * u * r, (m11 - m22) * u * v], axis=-1)
    acc = (cor - d * x[..., 3:6] + tau) / (params.S_diag * np.array([m11, m22, m33]))
    return np.concatenate([
        np.stack([c * u - s * v, s * u + c * v, r], axis=-1),
        acc,
    ], axis=-1)


def planning_dynamics(state, thruster_forces, params: ModelParams) -> np.ndarray:
    """Planning-model state derivative for one state/input pair."""
    if isinstance(state, VesselState):
        state = state.as_array()
    if hasattr(thruster_forces, "as_array"):
        thruster_forces = thruster_forces.as_array()
    return planning_dynamics_batch(np.asarray(state, float), np.asarray(thruster_forces, float), params)


def planning_dynamics_jacobian(x, u_p, params: ModelParams):
    """Jacobians of the planning model w.r.t. state and input.

    Returns ``(Jx, Ju)`` with shapes ``(..., 6, 6)`` and ``(..., 6, 4)``.
    """
    x = np.asarray(x, dtype=float)
    batch = x.shape[:-1]
    psi = x[..., 2]
    u, v, r = x[..., 3], x[..., 4], x[..., 5]
    c, s = np.cos(psi), np.sin(psi)
    m11, m22, m33 = params.m11, params.m22, params.m33
    mass = params.S_diag * np.array([m11, m22, m33])

    Jx = np.zeros(batch + (6, 6))
    Jx[..., 0, 2] = -s * u - c * v
    Jx[..., 0, 3] = c
    Jx[..., 0, 4] = -s
    Jx[..., 1, 2] = c * u - s * v
    Jx[..., 1, 3] = s
    Jx[..., 1, 4] = c
    Jx[..., 2, 5] = 1.0
    # derivative of d_ii(x) x
    gu = -params.X_u - 2.0 * params.X_uu * np.abs(u) - 3.0 * params.X_uuu * u**2
    gv = -params.Y_v - 2.0 * params.Y_vv * np.abs(v) - 3.0 * params.Y_vvv * v**2
    gr = -params.N_r - 2.0 * params.N_rr * np.abs(r)
    Jx[..., 3, 3] = -gu / mass[0]
    Jx[..., 3, 4] = m22 * r / mass[0]
    Jx[..., 3, 5] = m22 * v / mass[0]
    Jx[..., 4, 3] = -m11 * r / mass[1]
    Jx[..., 4, 4] = -gv / mass[1]
    Jx[..., 4, 5] = -m11 * u / mass[1]
    Jx[..., 5, 3] = (m11 - m22) * v / mass[2]
    Jx[..., 5, 4] = (m11 - m22) * u / mass[2]
    Jx[..., 5, 5] = -gr / mass[2]

    Ju = np.zeros(batch + (6, 4))
    Ju[..., 3:6, :] = params.thrust_map / mass[:, None]
    return Jx, Ju


def planning_dynamics_hessian_contraction(x, weights, params: ModelParams) -> np.ndarray:
    """``sum_m weights[m] * d^2 f_m / dx^2`` for the planning model.

    The input enters linearly, so only the state block is nonzero.  Returns an
    array of shape ``(..., 6, 6)``.
    """
    x = np.asarray(x, dtype=float)
    w = np.asarray(weights, dtype=float)
    batch = x.shape[:-1]
    psi = x[..., 2]
    u, v, r = x[..., 3], x[..., 4], x[..., 5]
    c, s = np.cos(psi), np.sin(psi)
    m11, m22, m33 = params.m11, params.m22, params.m33
    mass = params.S_diag * np.array([m11, m22, m33])
    w0, w1, w3, w4, w5 = w[..., 0], w[..., 1], w[..., 3], w[..., 4], w[..., 5]

    H = np.zeros(batch + (6, 6))
    H[..., 2, 2] = w0 * (-c * u + s * v) + w1 * (-s * u - c * v)
    H[..., 2, 3] = H[..., 3, 2] = -w0 * s + w1 * c
    H[..., 2, 4] = H[..., 4, 2] = -w0 * c - w1 * s
    huu = -2.0 * params.X_uu * np.sign(u) - 6.0 * params.X_uuu * u
    hvv = -2.0 * params.Y_vv * np.sign(v) - 6.0 * params.Y_vvv * v
    hrr = -2.0 * params.N_rr * np.sign(r)
    H[..., 3, 3] = -w3 * huu / mass[0]
    H[..., 4, 4] = -w4 * hvv / mass[1]
    H[..., 5, 5] = -w5 * hrr / mass[2]
    H[..., 4, 5] = H[..., 5, 4] = w3 * m22 / mass[0]
    H[..., 3, 5] = H[..., 5, 3] = -w4 * m11 / mass[1]
    H[..., 3, 4] = H[..., 4, 3] = w5 * (m11 - m22) / mass[2]
    return H


def tracking_feedforward(planned_velocity, planned_acceleration, params: ModelParams) -> np.ndarray:
    """Feed-forward force ``M_p nu_dot_p + D_p(nu_p) nu_p`` (no ``S``, no Coriolis)."""
    if isinstance(planned_velocity, BodyVelocity):
        planned_velocity = planned_velocity.as_array()
    nu = np.asarray(planned_velocity, dtype=float)
    acc = np.asarray(planned_acceleration, dtype=float)
    return np.array([params.m11, params.m22, params.m33]) * acc + damping_diag(nu, params) * nu


# --- simulation plant -----------------------------------------------------

def plant_inertia(params: ModelParams) -> np.ndarray:
    return np.array([
        [params.m11, 0.0, 0.0],
        [0.0, params.m22, params.m23],
        [0.0, params.m23, params.m33],
    ])


def plant_coriolis(nu, params: ModelParams) -> np.ndarray:
    u, v, r = nu
    a = params.m22 * v + params.m23 * r
    b = params.m11 * u
    return np.array([[0.0, 0.0, -a], [0.0, 0.0, b], [a, -b, 0.0]])


def plant_damping(nu, params: ModelParams) -> np.ndarray:
    D = np.diag(damping_diag(nu, params))
    D[1, 2] = -params.Y_r
    D[2, 1] = -params.N_v
    return D


def thruster_forces_from_actuators(actuators, params: ModelParams) -> np.ndarray:
    """Per-thruster body-frame forces ``[f_x1, f_y1, f_x2, f_y2]`` from ``[a1, a2, n1, n2]``."""
    a1, a2, n1, n2 = actuators
    F1 = params.k_t * n1 * abs(n1)
    F2 = params.k_t * n2 * abs(n2)
    return np.array([F1 * math.cos(a1), F1 * math.sin(a1), F2 * math.cos(a2), F2 * math.sin(a2)])


def actuator_force(actuators, params: ModelParams) -> np.ndarray:
    """Generalized force produced by the thrusters in their actual state."""
    return params.thrust_map @ thruster_forces_from_actuators(actuators, params)


def simulation_dynamics(state, actuators, commands, params: ModelParams,
                        disturbance=None):
    """Plant derivatives ``(x_dot, actuator_dot)``.

    ``state`` is the 6-vector ``[eta; nu]``, ``actuators`` is ``[a1, a2, n1, n2]``
    and ``commands`` ``[a1_c, a2_c, n1_c, n2_c]`` (dataclass forms are accepted
    too).  ``disturbance`` is an optional body-frame generalized force.
    """
    if isinstance(state, VesselState):
        state = state.as_array()
    if isinstance(actuators, ActuatorState):
        actuators = actuators.as_array()
    if isinstance(commands, ActuatorCommands):
        commands = commands.as_array()
    x = np.asarray(state, dtype=float)
    act = np.asarray(actuators, dtype=float)
    cmd = np.asarray(commands, dtype=float)
    nu = x[3:6]

    tau = actuator_force(act, params)
    if disturbance is not None:
        tau = tau + np.asarray(disturbance, dtype=float)
    rhs = tau - plant_coriolis(nu, params) @ nu - plant_damping(nu, params) @ nu
    nu_dot = np.linalg.solve(plant_inertia(params), rhs)
    eta_dot = rotation_matrix(x[2]) @ nu

    az_err = wrap_angle(cmd[0:2] - act[0:2])
    az_dot = np.clip(az_err / params.azimuth_time_constant,
                     -params.azimuth_rate_limit, params.azimuth_rate_limit)
    n_cmd = np.clip(cmd[2:4], -params.n_max, params.n_max)
    n_dot = (n_cmd - act[2:4]) / params.speed_time_constant
    return np.concatenate([eta_dot, nu_dot]), np.concatenate([az_dot, n_dot])
