"""Optimization-based docking: collocation planner, DP tracking and closed-loop simulation."""

__version__ = "0.1.0"
