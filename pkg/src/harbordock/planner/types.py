from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..vessel import Pose


@dataclass(frozen=True)
class ThrusterForces:
    """Per-thruster forces decomposed along the body axes (N)."""

    f_x1: float = 0.0
    f_y1: float = 0.0
    f_x2: float = 0.0
    f_y2: float = 0.0

    def as_array(self) -> np.ndarray:
        return np.array([self.f_x1, self.f_y1, self.f_x2, self.f_y2])


@dataclass(frozen=True)
class DockingSpec:
    docking_pose: Pose
    horizon_T: float = 120.0
    intervals_N: int = 60
    surge_bound: float = 1.0
    sway_bound: float = 1.0
    yaw_rate_bound: float = math.radians(5.0)
    f_max: float | None = None  # None: take it from the model parameters
    slack_weight_collision: float = 1.0e3
    slack_weight_velocity: float = 1.0e3
    slack_weight_thrust: float = 1.0e3
    huber_delta: float = 10.0
    heading_weight: float = 20.0
    sway_weight: float = 10.0
    yawrate_weight: float = 10.0
    sample_rate: float = 10.0
    # velocity rows use bound * (1 - velocity_margin): headroom for tracking error, so
    # the real vessel stays inside the bound, and for polynomial overshoot between the
    # boundary nodes where the rows are enforced
    velocity_margin: float = 0.08
    degree: int = field(default=3, repr=False)

    def __post_init__(self):
        if not self.horizon_T > 0:
            raise ValueError("horizon_T must be positive")
        if self.intervals_N < 1:
            raise ValueError("intervals_N must be at least 1")
        for name in ("surge_bound", "sway_bound", "yaw_rate_bound", "slack_weight_collision",
                     "slack_weight_velocity", "slack_weight_thrust", "huber_delta",
                     "heading_weight", "sway_weight", "yawrate_weight", "sample_rate"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if not 0.0 <= self.velocity_margin < 1.0:
            raise ValueError("velocity_margin must be in [0, 1)")
        if self.f_max is not None and not self.f_max > 0:
            raise ValueError("f_max must be positive")

    @property
    def velocity_bounds(self) -> np.ndarray:
        return np.array([self.surge_bound, self.sway_bound, self.yaw_rate_bound])

    @property
    def interval(self) -> float:
        return self.horizon_T / self.intervals_N
