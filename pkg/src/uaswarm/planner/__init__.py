"""Uncertainty-aware trajectory optimisation with separating planes."""

from .audit import audit
from .constraints import constraint_residuals, cost, cost_terms, inflate_obstacle
from .fov import fov_metrics, in_fov, visibility_stats
from .problem import (AuditReport, CommittedTrajectory, DecisionVariables, InitialState,
                      Infeasible, Obstacle, PeerTrajectory, PlannerConfig, PlanningProblem,
                      SeparatingPlane)
from .solver import UncertaintyAwarePlanner, solve

__all__ = [
    "AuditReport", "CommittedTrajectory", "DecisionVariables", "InitialState", "Infeasible",
    "Obstacle", "PeerTrajectory", "PlannerConfig", "PlanningProblem", "SeparatingPlane",
    "UncertaintyAwarePlanner", "audit", "constraint_residuals", "cost", "cost_terms",
    "fov_metrics", "in_fov", "inflate_obstacle", "solve", "visibility_stats",
]
