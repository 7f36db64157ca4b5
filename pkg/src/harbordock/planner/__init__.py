from .cost import cost_to_go, pseudo_huber
from .ocp import DockingOcp, InvalidRegion, build_ocp
from .plan import PlannedTrajectory, SolveStats, SolverNotConverged, default_solve_options, plan
from .types import DockingSpec, ThrusterForces

__all__ = [
    "DockingOcp", "DockingSpec", "InvalidRegion", "PlannedTrajectory", "SolveStats",
    "SolverNotConverged", "ThrusterForces", "build_ocp", "cost_to_go",
    "default_solve_options", "plan", "pseudo_huber",
]
