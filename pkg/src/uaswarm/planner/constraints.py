"""Cost, constraint residuals and the covariance schedule, evaluated in numpy.

This is the reference evaluation used for reporting and for cross-checking
the differentiable objective the solver minimises.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.polynomial.legendre import leggauss

from .._validation import check_covariance, check_points
from ..geometry import wrap_angle
from ..trajectory import SplineTrajectory
from ..uncertainty import (LinearModel, ellipsoid_halfwidths, propagate_horizon,
                           propagate_motion_uncertainty)
from .problem import DecisionVariables, PlannerConfig, PlanningProblem

_BOX_CORNERS = np.array([[sx, sy, sz] for sx in (-1, 1) for sy in (-1, 1) for sz in (-1, 1)],
                        dtype=float)


def inflate_obstacle(hull, P_pos, agent_radius, level=0.95):
    """Minkowski sum of ``hull`` with the box bounding the confidence ellipsoid grown by the radius."""
    hull = check_points(hull, 3, "hull", min_points=1)
    P_pos = check_covariance(P_pos, 3, "P_pos")
    if agent_radius < 0:
        raise ValueError("agent_radius must be >= 0")
    w = ellipsoid_halfwidths(P_pos, level) + agent_radius
    pts = (hull[:, None, :] + _BOX_CORNERS[None, :, :] * w).reshape(-1, 3)
    return np.unique(pts, axis=0)


def step_times(traj: SplineTrajectory, config: PlannerConfig):
    """Covariance step times ``t_in + k D / N`` for ``k = 0..N``."""
    return np.linspace(traj.t_in, traj.T, config.n_steps + 1)


def interval_steps(config: PlannerConfig):
    """Step indices (inclusive of both ends) belonging to each interval."""
    s = config.steps_per_interval
    return np.array([np.arange(j * s, (j + 1) * s + 1) for j in range(config.n_intervals)])


def obstacle_covariances(obstacle, traj: SplineTrajectory, config: PlannerConfig):
    N = config.n_steps
    dt = traj.duration / N
    model = LinearModel.constant_acceleration(dt)
    P = propagate_horizon(obstacle.belief, model, traj, dt, N, config.fov, config.mount,
                          t0=traj.t_in)
    return np.concatenate([obstacle.belief.covariance[None], P])


def motion_covariances(traj: SplineTrajectory, config: PlannerConfig):
    N = config.n_steps
    t = step_times(traj, config)
    dt = traj.duration / N
    poses = [traj.pose3(tk, hold=True) for tk in t[1:]]
    ts, p_traj = traj.sample_uniform(config.n_traj_samples)
    mu = propagate_motion_uncertainty(poses, t[1:], p_traj, ts,
                                      LinearModel.constant_acceleration(dt), config.fov,
                                      config.motion_prior, config.mount)
    return np.stack([config.motion_prior] + [m.covariance for m in mu])


def interval_velocity_bounds(motion_covs, config: PlannerConfig):
    """Per-interval, per-axis speed bound (``v_limit / sqrt(diag P^m)`` capped at ``v_cap``)."""
    n = config.n_intervals
    if not config.use_motion_uncertainty:
        return np.tile(config.v_cap, (n, 1))
    d = np.diagonal(np.asarray(motion_covs)[:, :3, :3], axis1=1, axis2=2)
    worst = d[interval_steps(config)].max(axis=1)
    return np.minimum(config.v_cap, config.v_limit / np.sqrt(worst))


def interval_halfwidths(covs, config: PlannerConfig):
    hw = ellipsoid_halfwidths(np.asarray(covs)[:, :3, :3], config.confidence)
    return hw[interval_steps(config)].max(axis=1)


def peer_max_acceleration(peer_traj: SplineTrajectory):
    return float(np.max(np.linalg.norm(peer_traj.control_points(2), axis=1)))


def object_boxes(problem: PlanningProblem, traj: SplineTrajectory):
    """Box centres ``(n_obj, n_int, s+1, 3)`` and half-extents ``(n_obj, n_int, 3)``.

    Obstacles come first, then peers.  The half-extents include the agent
    radius, the confidence halfwidths and a pad bounding the deviation of
    the object's path from the chord between consecutive step samples.
    """
    cfg = problem.config
    t = step_times(traj, cfg)
    h = traj.duration / cfg.n_steps
    idx = interval_steps(cfg)
    centers, ext = [], []
    for ob in problem.obstacles:
        c = ob.mean_position(t - traj.t_in)
        hw = interval_halfwidths(obstacle_covariances(ob, traj, cfg), cfg)
        pad = np.linalg.norm(ob.belief.mean[6:9]) * h * h / 8.0
        centers.append(c[idx])
        ext.append(ob.half_extent + cfg.agent_radius + hw + pad)
    for peer in problem.peers:
        c = peer.trajectory.position(t, hold=True)
        pad = peer_max_acceleration(peer.trajectory) * h * h / 8.0
        e = peer.radius + cfg.agent_radius + cfg.peer_margin + pad
        centers.append(c[idx])
        ext.append(np.full((cfg.n_intervals, 3), e))
    if not centers:
        return np.zeros((0, cfg.n_intervals, idx.shape[1], 3)), np.zeros((0, cfg.n_intervals, 3))
    return np.stack(centers), np.stack(ext)


def _gl_integral(fn, traj: SplineTrajectory, order=2):
    x, w = leggauss(order)
    total = 0.0
    for j in range(traj.n_intervals):
        a, b = traj.interval_bounds(j)
        t = 0.5 * (b - a) * x + 0.5 * (a + b)
        total += 0.5 * (b - a) * float(np.sum(w * fn(t)))
    return total


def cost_terms(decision: DecisionVariables, problem: PlanningProblem):
    traj = decision.trajectory
    cfg = problem.config
    jerk = _gl_integral(lambda t: np.sum(traj.derivative(t, 3) ** 2, axis=-1), traj)
    yaw_acc = _gl_integral(lambda t: traj.yaw(t, 2) ** 2, traj)
    p_end = traj.position(traj.T)
    goal = float(np.sum((p_end - problem.local_goal()) ** 2))
    goal_yaw = wrap_angle(float(traj.yaw(traj.T)) - problem.goal_yaw) ** 2
    return {
        "jerk": cfg.alpha_jerk * jerk,
        "yaw": cfg.alpha_yaw * yaw_acc,
        "time": cfg.alpha_time * traj.T,
        "goal": cfg.alpha_goal * goal,
        "goal_yaw": cfg.alpha_goal_yaw * goal_yaw,
    }


def cost(decision: DecisionVariables, problem: PlanningProblem):
    """Weighted jerk, yaw-acceleration, end-time and goal terms."""
    return float(sum(cost_terms(decision, problem).values()))


@dataclass(frozen=True, eq=False)
class Residuals:
    """Constraint residuals; equalities should be 0 and inequalities <= 0."""

    initial: np.ndarray
    terminal: np.ndarray
    planes: np.ndarray
    velocity: np.ndarray
    velocity_bound: np.ndarray
    acceleration: np.ndarray
    jerk: np.ndarray
    yaw: np.ndarray
    workspace: np.ndarray
    goal: np.ndarray

    def equality(self):
        return np.concatenate([self.initial, self.terminal])

    def inequality(self):
        return np.concatenate([np.ravel(a) for a in (self.planes, self.velocity, self.acceleration,
                                                     self.jerk, self.yaw, self.workspace,
                                                     self.goal)])

    def max_violation(self):
        eq = np.max(np.abs(self.equality()), initial=0.0)
        ineq = np.max(self.inequality(), initial=0.0)
        return float(max(eq, ineq))


def constraint_residuals(decision: DecisionVariables, problem: PlanningProblem):
    traj = decision.trajectory
    cfg = problem.config
    if traj.n_intervals != cfg.n_intervals:
        raise ValueError("trajectory interval count does not match the configuration")
    if abs(traj.t_in - problem.t_in) > 1e-9:
        raise ValueError("trajectory must start at the problem's t_in")
    x0 = problem.initial
    s0 = traj.evaluate(traj.t_in)
    sT = traj.evaluate(traj.T)
    initial = np.concatenate([s0.position - x0.position, s0.velocity - x0.velocity,
                              s0.acceleration - x0.acceleration,
                              [wrap_angle(s0.yaw - x0.yaw), s0.yaw_rate - x0.yaw_rate]])
    terminal = np.concatenate([sT.velocity, sT.acceleration, [sT.yaw_rate]])

    centers, ext = object_boxes(problem, traj)
    plane_res = []
    for pl in decision.planes:
        j, o = pl.interval, pl.obstacle
        ego = traj.interval_hull(j) @ pl.normal + pl.offset + cfg.plane_margin
        support = centers[o, j] @ pl.normal - ext[o, j] @ np.abs(pl.normal) + pl.offset
        plane_res.append(np.concatenate([ego, cfg.plane_margin - support]))
    if len(decision.planes) != centers.shape[0] * cfg.n_intervals:
        raise ValueError("need one plane per (object, interval)")
    planes = np.concatenate(plane_res) if plane_res else np.zeros(0)

    vb = interval_velocity_bounds(motion_covariances(traj, cfg), cfg)
    V = np.stack(traj.velocity_control_points())
    velocity = np.abs(V) - vb[:, None, :]
    acceleration = np.abs(traj.control_points(2)) - cfg.a_max
    jerk = np.abs(traj.control_points(3)) - cfg.j_max
    yaw = np.abs(traj.yaw_control_points(1)) - cfg.yaw_rate_max
    if cfg.yaw_max is not None:
        yaw = np.concatenate([yaw, np.abs(traj.yaw_ctrl) - cfg.yaw_max])
    ws = []
    if cfg.workspace_lower is not None:
        ws.append((cfg.workspace_lower - traj.pos_ctrl).ravel())
    if cfg.workspace_upper is not None:
        ws.append((traj.pos_ctrl - cfg.workspace_upper).ravel())
    workspace = np.concatenate(ws) if ws else np.zeros(0)
    goal = np.zeros(0)
    if np.isfinite(cfg.goal_tolerance):
        goal = np.array([np.linalg.norm(sT.position - problem.local_goal()) - cfg.goal_tolerance])
    return Residuals(initial, terminal, planes, velocity, vb, acceleration, jerk, yaw, workspace,
                     goal)
