"""Dynamic-positioning tracking controller: PID on pose error plus feed-forward."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .vessel import ModelParams, Pose, VesselState, rotation_matrix, tracking_feedforward, wrap_angle


@dataclass(frozen=True)
class DpGains:
    """Diagonal PID gains and the anti-windup box on the integral contribution."""

    kp: tuple = (100.0, 100.0, 200.0)
    ki: tuple = (10.0, 10.0, 20.0)
    kd: tuple = (1000.0, 1000.0, 1500.0)
    antiwindup_limit: tuple = (150.0, 150.0, 200.0)

    def __post_init__(self):
        for name in ("kp", "ki", "kd", "antiwindup_limit"):
            vals = tuple(float(v) for v in getattr(self, name))
            if len(vals) != 3:
                raise ValueError(f"{name} needs three entries")
            if not all(v > 0 for v in vals):
                raise ValueError(f"{name} entries must be positive")
            object.__setattr__(self, name, vals)

    @classmethod
    def from_dict(cls, data: dict) -> "DpGains":
        unknown = set(data) - {"kp", "ki", "kd", "antiwindup_limit"}
        if unknown:
            raise ValueError(f"unknown gain fields: {sorted(unknown)}")
        return cls(**{k: tuple(v) for k, v in data.items()})

    def to_dict(self) -> dict:
        return {"kp": list(self.kp), "ki": list(self.ki), "kd": list(self.kd),
                "antiwindup_limit": list(self.antiwindup_limit)}


@dataclass(frozen=True)
class ControllerState:
    """Accumulated integral contribution (N, N, N·m) and the time of the last update."""

    integral_term: np.ndarray = field(default_factory=lambda: np.zeros(3))
    last_time: float | None = None


@dataclass(frozen=True)
class Reference:
    """One sample of the planned motion: pose, body velocity and body acceleration."""

    pose: np.ndarray
    velocity: np.ndarray
    acceleration: np.ndarray


def pose_error(measured, planned) -> np.ndarray:
    """``measured - planned`` with the heading difference wrapped to (-pi, pi]."""
    m = measured.as_array() if isinstance(measured, Pose) else np.asarray(measured, float)
    p = planned.as_array() if isinstance(planned, Pose) else np.asarray(planned, float)
    return np.array([m[0] - p[0], m[1] - p[1], wrap_angle(m[2] - p[2])])


def control(measured, reference: Reference, state: ControllerState, gains: DpGains,
            params: ModelParams, dt: float, time: float | None = None):
    """Commanded body-frame force ``tau_c`` and the updated controller state.

    The feedback acts in the Earth frame and is rotated into the body frame;
    the derivative of the pose error is taken from the measured and planned
    velocities.  The integral used in this step is the one accumulated so
    far; it is advanced afterwards and clamped to the anti-windup box.
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    x = measured.as_array() if isinstance(measured, VesselState) else np.asarray(measured, float)
    eta, nu = x[:3], x[3:6]
    eta_p = np.asarray(reference.pose, float)
    nu_p = np.asarray(reference.velocity, float)

    err = pose_error(eta, eta_p)
    R = rotation_matrix(eta[2])
    err_rate = R @ nu - rotation_matrix(eta_p[2]) @ nu_p
    kp, kd = np.asarray(gains.kp), np.asarray(gains.kd)
    tau_fb = -R.T @ (kp * err + state.integral_term + kd * err_rate)
    tau_ff = tracking_feedforward(nu_p, reference.acceleration, params)

    limit = np.asarray(gains.antiwindup_limit)
    integral = np.clip(state.integral_term + np.asarray(gains.ki) * err * dt, -limit, limit)
    new_state = ControllerState(integral, time if time is not None else state.last_time)
    return tau_ff + tau_fb, new_state
