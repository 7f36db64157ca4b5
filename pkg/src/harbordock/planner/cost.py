"""Docking cost-to-go."""

from __future__ import annotations

import numpy as np

from ..vessel import ModelParams, VesselState
from .types import DockingSpec, ThrusterForces


def pseudo_huber(a, delta: float):
    """``delta^2 (sqrt(1 + a'a / delta^2) - 1)`` over the last axis of ``a``."""
    if not delta > 0:
        raise ValueError("delta must be positive")
    a = np.asarray(a, dtype=float)
    q = np.sum(a * a, axis=-1)
    # expm1/log1p form keeps precision for tiny |a|
    val = delta**2 * np.expm1(0.5 * np.log1p(q / delta**2))
    return float(val) if np.ndim(val) == 0 else val


def pseudo_huber_grad_hess(a, delta: float):
    """Gradient ``(..., 2)`` and Hessian ``(..., 2, 2)`` of :func:`pseudo_huber`."""
    a = np.asarray(a, dtype=float)
    s = np.sqrt(1.0 + np.sum(a * a, axis=-1) / delta**2)
    grad = a / s[..., None]
    eye = np.eye(a.shape[-1])
    hess = eye / s[..., None, None] - a[..., :, None] * a[..., None, :] / (delta**2 * s**3)[..., None, None]
    return grad, hess


def cost_terms(x, u, spec: DockingSpec, params: ModelParams):
    """Cost-to-go for batched states ``(..., 6)`` and inputs ``(..., 4)`` (newtons)."""
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    goal = spec.docking_pose
    pos_err = x[..., 0:2] - np.array([goal.north, goal.east])
    return (pseudo_huber(pos_err, spec.huber_delta)
            + spec.heading_weight * (1.0 - np.cos(x[..., 2] - goal.heading))
            + spec.sway_weight * x[..., 4] ** 2
            + spec.yawrate_weight * x[..., 5] ** 2
            + np.sum(u * u, axis=-1) / params.m11**2)


def cost_to_go(state, thruster_forces, spec: DockingSpec, params: ModelParams) -> float:
    if isinstance(state, VesselState):
        state = state.as_array()
    if isinstance(thruster_forces, ThrusterForces):
        thruster_forces = thruster_forces.as_array()
    return float(cost_terms(state, thruster_forces, spec, params))
