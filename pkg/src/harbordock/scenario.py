"""Scenario definition and JSON loading.

Headings and yaw rates are given in degrees in scenario files and converted
to radians on load; everything inside the package works in radians.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .control import DpGains
from .geometry import HarborMap
from .planner.types import DockingSpec
from .vessel import BodyVelocity, ModelParams, Pose, VesselState


class ScenarioInvalid(ValueError):
    pass


LATENCY_MODES = ("zero", "measured")


@dataclass(frozen=True)
class Wind:
    """Body-frame disturbance: a constant force plus a sinusoidal gust.

    The gust acts along the constant force (along surge if that is zero) with
    amplitude ``gust_amplitude`` N and period ``gust_period`` s; its phase is
    drawn from the scenario seed.
    """

    force: tuple = (0.0, 0.0)
    gust_amplitude: float = 0.0
    gust_period: float = 20.0

    def __post_init__(self):
        f = tuple(float(v) for v in self.force)
        if len(f) != 2:
            raise ScenarioInvalid("wind force must be a 2-vector")
        object.__setattr__(self, "force", f)
        if self.gust_amplitude < 0 or not self.gust_period > 0:
            raise ScenarioInvalid("gust amplitude must be >= 0 and period > 0")

    @property
    def calm(self) -> bool:
        return self.force == (0.0, 0.0) and self.gust_amplitude == 0.0

    def force_at(self, t: float, phase: float) -> np.ndarray:
        f = np.array(self.force)
        norm = float(np.hypot(*f))
        direction = f / norm if norm > 0 else np.array([1.0, 0.0])
        gust = self.gust_amplitude * math.sin(2.0 * math.pi * t / self.gust_period + phase)
        fx, fy = f + gust * direction
        return np.array([fx, fy, 0.0])


@dataclass(frozen=True)
class Noise:
    """Gaussian measurement noise standard deviations (pose, body velocity)."""

    pose_std: tuple = (0.0, 0.0, 0.0)
    velocity_std: tuple = (0.0, 0.0, 0.0)

    @property
    def enabled(self) -> bool:
        return any(self.pose_std) or any(self.velocity_std)


@dataclass(frozen=True)
class Thresholds:
    position: float = 0.5
    heading: float = math.radians(5.0)
    solve_time: float = 2.0
    max_violations: int = 0


@dataclass(frozen=True)
class Scenario:
    harbor: HarborMap
    initial_state: VesselState
    spec: DockingSpec
    gains: DpGains = field(default_factory=DpGains)
    params: ModelParams = field(default_factory=ModelParams)
    wind: Wind = field(default_factory=Wind)
    duration: float = 200.0
    seed: int = 0
    plan_latency_mode: str = "zero"
    noise: Noise = field(default_factory=Noise)
    reset_integral_on_replan: bool = False
    replan_period: float = 10.0
    control_rate: float = 10.0
    integration_rate: float = 100.0
    edge_budget: int = 8
    thresholds: Thresholds = field(default_factory=Thresholds)
    name: str = "scenario"

    def __post_init__(self):
        if not self.duration > 0:
            raise ScenarioInvalid("duration must be positive")
        if self.plan_latency_mode not in LATENCY_MODES:
            raise ScenarioInvalid(f"plan_latency_mode must be one of {LATENCY_MODES}")
        for name in ("replan_period", "control_rate", "integration_rate"):
            if not getattr(self, name) > 0:
                raise ScenarioInvalid(f"{name} must be positive")
        steps = self.integration_rate / self.control_rate
        if abs(steps - round(steps)) > 1e-9:
            raise ScenarioInvalid("integration rate must be a multiple of the control rate")
        ticks = self.replan_period * self.control_rate
        if abs(ticks - round(ticks)) > 1e-9:
            raise ScenarioInvalid("replan period must be a whole number of control ticks")
        if not np.all(np.isfinite(self.initial_state.as_array())):
            raise ScenarioInvalid("initial state must be finite")

    @property
    def docking_pose(self) -> Pose:
        return self.spec.docking_pose

    def with_initial_pose(self, pose: Pose) -> "Scenario":
        return replace(self, initial_state=VesselState(pose, self.initial_state.velocity))


def _pose_from(d: dict) -> Pose:
    return Pose(float(d["north"]), float(d["east"]), math.radians(float(d.get("heading_deg", 0.0))))


def scenario_from_dict(data: dict, base_dir: Path | None = None) -> Scenario:
    """Build a scenario from its JSON form; ``map`` may be inline or a path."""
    base_dir = Path(base_dir or ".")
    try:
        m = data["map"]
        harbor = HarborMap.from_dict(m) if isinstance(m, dict) else HarborMap.load(base_dir / m)

        params = ModelParams()
        if "params" in data:
            p = data["params"]
            params = ModelParams.load(base_dir / p) if isinstance(p, str) else \
                ModelParams.from_dict({**params.to_dict(), **p})

        init = data["initial_state"]
        state = VesselState(
            _pose_from(init),
            BodyVelocity(float(init.get("surge", 0.0)), float(init.get("sway", 0.0)),
                         math.radians(float(init.get("yaw_rate_deg", 0.0)))))

        spec_kw = dict(data.get("spec", {}))
        if "yaw_rate_bound_deg" in spec_kw:
            spec_kw["yaw_rate_bound"] = math.radians(spec_kw.pop("yaw_rate_bound_deg"))
        spec = DockingSpec(docking_pose=_pose_from(data["docking_pose"]), **spec_kw)

        gains = DpGains.from_dict(data["gains"]) if "gains" in data else DpGains()
        wind_d = data.get("wind", {})
        wind = Wind(tuple(wind_d.get("force", (0.0, 0.0))),
                    float(wind_d.get("gust_amplitude", 0.0)),
                    float(wind_d.get("gust_period", 20.0)))
        noise_d = data.get("noise", {})
        noise = Noise(tuple(noise_d.get("pose_std", (0.0, 0.0, 0.0))),
                      tuple(noise_d.get("velocity_std", (0.0, 0.0, 0.0))))
        th = data.get("thresholds", {})
        thresholds = Thresholds(
            position=float(th.get("position", 0.5)),
            heading=math.radians(float(th.get("heading_deg", 5.0))),
            solve_time=float(th.get("solve_time", 2.0)),
            max_violations=int(th.get("max_violations", 0)),
        )
        return Scenario(
            harbor=harbor, initial_state=state, spec=spec, gains=gains, params=params,
            wind=wind, duration=float(data.get("duration", 200.0)), seed=int(data.get("seed", 0)),
            plan_latency_mode=data.get("plan_latency_mode", "zero"), noise=noise,
            reset_integral_on_replan=bool(data.get("reset_integral_on_replan", False)),
            replan_period=float(data.get("replan_period", 10.0)),
            control_rate=float(data.get("control_rate", 10.0)),
            integration_rate=float(data.get("integration_rate", 100.0)),
            edge_budget=int(data.get("edge_budget", 8)),
            thresholds=thresholds, name=data.get("name", "scenario"),
        )
    except ScenarioInvalid:
        raise
    except (KeyError, TypeError, ValueError, OSError) as exc:
        raise ScenarioInvalid(f"bad scenario: {exc}") from exc


def load_scenario(path) -> Scenario:
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ScenarioInvalid(f"cannot read scenario {path}: {exc}") from exc
    return scenario_from_dict(data, path.parent)
