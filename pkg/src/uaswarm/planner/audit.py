"""Dense-sampling feasibility audit of a finished trajectory.

Works on sampled curve values only (no control-point hulls, no planes), so
it catches anything the optimiser's conservative reformulation might hide.
"""

from __future__ import annotations

import numpy as np

from ..geometry import angle_diff
from ..trajectory import SplineTrajectory
from .constraints import (interval_halfwidths, interval_velocity_bounds, motion_covariances,
                          obstacle_covariances)
from .problem import AuditReport, PlanningProblem


def audit(traj: SplineTrajectory, problem: PlanningProblem, n_samples=400, tol=1e-6):
    if n_samples < 200:
        raise ValueError("the audit needs at least 200 samples")
    cfg = problem.config
    t = np.linspace(traj.t_in, traj.T, n_samples)
    p = traj.position(t)
    v = traj.derivative(t, 1)
    a = traj.derivative(t, 2)
    jk = traj.derivative(t, 3)
    yd = traj.yaw(t, 1)
    j_of = np.minimum(((t - traj.t_in) / traj.duration * cfg.n_intervals).astype(int),
                      cfg.n_intervals - 1)
    bad = []

    x0 = problem.initial
    s0 = traj.evaluate(traj.t_in)
    init_err = max(np.max(np.abs(s0.position - x0.position)),
                   np.max(np.abs(s0.velocity - x0.velocity)),
                   np.max(np.abs(s0.acceleration - x0.acceleration)),
                   abs(angle_diff(s0.yaw, x0.yaw)), abs(s0.yaw_rate - x0.yaw_rate))
    if init_err > 1e-6:
        bad.append(f"initial state mismatch {init_err:.3g}")
    end = traj.evaluate(traj.T)
    rest = max(np.max(np.abs(end.velocity)), np.max(np.abs(end.acceleration)), abs(end.yaw_rate))
    if rest > 1e-6:
        bad.append(f"terminal state not at rest ({rest:.3g})")

    vb = interval_velocity_bounds(motion_covariances(traj, cfg), cfg)
    over = np.abs(v) - vb[j_of]
    if np.max(over) > tol:
        bad.append(f"velocity bound exceeded by {np.max(over):.3g}")
    if np.max(np.abs(a) - cfg.a_max) > tol:
        bad.append("acceleration bound exceeded")
    if np.max(np.abs(jk) - cfg.j_max) > tol:
        bad.append("jerk bound exceeded")
    if np.max(np.abs(yd)) > cfg.yaw_rate_max + tol:
        bad.append("yaw-rate bound exceeded")
    if cfg.yaw_max is not None and np.max(np.abs(traj.yaw(t))) > cfg.yaw_max + tol:
        bad.append("yaw bound exceeded")
    if cfg.workspace_lower is not None and np.any(p < cfg.workspace_lower - tol):
        bad.append("left the workspace")
    if cfg.workspace_upper is not None and np.any(p > cfg.workspace_upper + tol):
        bad.append("left the workspace")
    if np.isfinite(cfg.goal_tolerance):
        miss = np.linalg.norm(end.position - problem.local_goal())
        if miss > cfg.goal_tolerance + tol:
            bad.append(f"terminal point {miss:.3g} m from goal")

    clearance = np.inf
    for k, ob in enumerate(problem.obstacles):
        centre = ob.mean_position(t - traj.t_in)
        ext = ob.half_extent + cfg.agent_radius + interval_halfwidths(
            obstacle_covariances(ob, traj, cfg), cfg)[j_of]
        gap = np.max(np.abs(p - centre) - ext, axis=1)
        clearance = min(clearance, float(gap.min()))
        if gap.min() < -tol:
            bad.append(f"obstacle {k} clearance violated by {-gap.min():.3g} m")
    for k, peer in enumerate(problem.peers):
        centre = peer.trajectory.position(t, hold=True)
        ext = peer.radius + cfg.agent_radius + cfg.peer_margin
        gap = np.max(np.abs(p - centre), axis=1) - ext
        clearance = min(clearance, float(gap.min()))
        if gap.min() < -tol:
            bad.append(f"peer {peer.agent_id} clearance violated by {-gap.min():.3g} m")
    return AuditReport(not bad, tuple(bad), clearance, n_samples)
