"""Thrust allocation for two azimuth thrusters (extended-thrust pseudo-inverse)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .vessel import ActuatorCommands, ModelParams, wrap_angle


@dataclass(frozen=True)
class Allocation:
    commands: ActuatorCommands
    forces: np.ndarray      # [f_x1, f_y1, f_x2, f_y2] after clipping
    saturated: tuple        # per thruster: was the vector clipped


def allocate_forces(tau_c, params: ModelParams, f_max: float | None = None):
    """Per-thruster force vectors for ``tau_c``, each clipped to norm ``f_max``."""
    tau = np.asarray(tau_c, dtype=float)
    forces = np.linalg.pinv(params.thrust_map) @ tau
    f_max = params.f_max if f_max is None else f_max
    pairs = forces.reshape(2, 2)
    norms = np.linalg.norm(pairs, axis=1)
    saturated = norms > f_max
    scale = np.where(saturated, f_max / np.where(saturated, norms, 1.0), 1.0)
    return (pairs * scale[:, None]).ravel(), tuple(bool(s) for s in saturated)


def speed_from_thrust(force, params: ModelParams):
    """Invert ``F = k_t n |n|``."""
    force = np.asarray(force, dtype=float)
    return np.sign(force) * np.sqrt(np.abs(force) / params.k_t)


def allocate(tau_c, params: ModelParams, previous: ActuatorCommands | None = None,
             f_max: float | None = None) -> Allocation:
    """Azimuth and propeller-speed commands realizing ``tau_c``.

    Each thruster points along its force vector.  With ``previous`` given, a
    thruster whose required direction is more than 90 degrees from its last
    azimuth command keeps the opposite azimuth and reverses the propeller
    instead of swinging round; a zero-force thruster keeps its azimuth.
    """
    forces, saturated = allocate_forces(tau_c, params, f_max)
    azimuths, speeds = [], []
    for i in range(2):
        fx, fy = forces[2 * i], forces[2 * i + 1]
        mag = float(np.hypot(fx, fy))
        if mag == 0.0:
            alpha = previous.azimuth_commands[i] if previous is not None else 0.0
            azimuths.append(float(alpha))
            speeds.append(0.0)
            continue
        alpha = float(np.arctan2(fy, fx))
        thrust = mag
        if previous is not None:
            prev = previous.azimuth_commands[i]
            if abs(wrap_angle(alpha - prev)) > np.pi / 2:
                alpha = wrap_angle(alpha + np.pi)
                thrust = -mag
        speed = float(np.clip(speed_from_thrust(thrust, params), -params.n_max, params.n_max))
        azimuths.append(float(alpha))
        speeds.append(speed)
    cmd = ActuatorCommands((azimuths[0], azimuths[1]), (speeds[0], speeds[1]))
    return Allocation(cmd, forces, saturated)
