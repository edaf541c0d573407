"""Multi-start penalty/SQP solver and the estimator wrapper."""

from __future__ import annotations

import logging
import math
import warnings

import jax.numpy as jnp
import numpy as np
from scipy.optimize import minimize
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ..trajectory import SplineTrajectory
from ..uncertainty import chi2_quantile
from ._objective import Layout, compiled
from .audit import audit
from .constraints import cost, peer_max_acceleration
from .problem import (CommittedTrajectory, DecisionVariables, Infeasible, PlannerConfig,
                      PlanningProblem, SeparatingPlane)

logger = logging.getLogger(__name__)

PEER_GRID = 128
MAX_NORMAL = 1e4


def layout_for(problem: PlanningProblem) -> Layout:
    cfg = problem.config
    return Layout(
        n_intervals=cfg.n_intervals,
        steps_per_interval=cfg.steps_per_interval,
        n_samples=cfg.n_traj_samples,
        n_obstacles=len(problem.obstacles),
        n_peers=len(problem.peers),
        use_motion=cfg.use_motion_uncertainty,
        yaw_value_bound=cfg.yaw_max is not None,
        workspace_lower=cfg.workspace_lower is not None,
        workspace_upper=cfg.workspace_upper is not None,
        goal_bound=math.isfinite(cfg.goal_tolerance),
    )


def _params(problem: PlanningProblem):
    cfg = problem.config
    x0 = problem.initial
    prm = {
        "p0": x0.position, "v0": x0.velocity, "a0": x0.acceleration,
        "psi0": x0.yaw, "psid0": x0.yaw_rate, "t_in": x0.t,
        "goal": problem.local_goal(), "goal_yaw": problem.goal_yaw,
        "w": np.array([cfg.alpha_jerk, cfg.alpha_yaw, cfg.alpha_time, cfg.alpha_goal,
                       cfg.alpha_goal_yaw]),
        "a_max": cfg.a_max, "j_max": cfg.j_max, "v_cap": cfg.v_cap, "v_limit": cfg.v_limit,
        "yaw_rate_max": cfg.yaw_rate_max, "yaw_max": cfg.yaw_max or 0.0,
        "tightening": cfg.tightening,
        "theta": cfg.fov.theta, "fov_eps": cfg.fov.epsilon, "max_mult": cfg.fov.max_multiplier,
        "R_max": cfg.fov.r_max, "prior": cfg.motion_prior,
        "chi2": chi2_quantile(cfg.confidence, 3), "r_agent": cfg.agent_radius,
        "ws_lo": cfg.workspace_lower if cfg.workspace_lower is not None else np.zeros(3),
        "ws_hi": cfg.workspace_upper if cfg.workspace_upper is not None else np.zeros(3),
        "goal_tol": cfg.goal_tolerance if math.isfinite(cfg.goal_tolerance) else 0.0,
        "mu": 1.0,
    }
    if problem.obstacles:
        means = np.stack([o.belief.mean for o in problem.obstacles])
        prm["obs_p"], prm["obs_v"], prm["obs_a"] = means[:, 0:3], means[:, 3:6], means[:, 6:9]
        prm["obs_cov"] = np.stack([o.belief.covariance for o in problem.obstacles])
        prm["obs_ext"] = np.stack([o.half_extent for o in problem.obstacles])
    if problem.peers:
        ts, ps, amax, pad = [], [], [], []
        for peer in problem.peers:
            tr = peer.trajectory
            t = np.linspace(tr.t_in, tr.T, PEER_GRID)
            ts.append(t)
            ps.append(tr.position(t))
            amax.append(peer_max_acceleration(tr))
            pad.append(amax[-1] * (t[1] - t[0]) ** 2 / 8.0)
        prm["peer_t"], prm["peer_p"] = np.stack(ts), np.stack(ps)
        prm["peer_amax"], prm["peer_pad"] = np.array(amax), np.array(pad)
        prm["peer_ext"] = np.array([p.radius + cfg.peer_margin for p in problem.peers])
    return prm


def _object_centroids(problem, prm, tau_mid, D):
    out = []
    for o in range(len(problem.obstacles)):
        dt = tau_mid * D
        out.append(prm["obs_p"][o] + prm["obs_v"][o] * dt[:, None]
                   + 0.5 * prm["obs_a"][o] * dt[:, None] ** 2)
    for k in range(len(problem.peers)):
        t = prm["t_in"] + tau_mid * D
        out.append(np.stack([np.interp(t, prm["peer_t"][k], prm["peer_p"][k][:, i])
                             for i in range(3)], axis=1))
    return out


def _seeds(problem: PlanningProblem, layout: Layout, prm, consts):
    cfg = problem.config
    p0 = problem.initial.position
    goal = prm["goal"]
    dist = float(np.linalg.norm(goal - p0))
    speed = float(np.min(cfg.v_cap))
    lo, hi = cfg.duration_bounds
    D = float(np.clip(max(1.5 * dist / speed, 2.0 * np.linalg.norm(problem.initial.velocity)
                          / float(np.min(cfg.a_max)), 1.0), lo, hi))
    direction = goal - p0
    horiz = np.array([-direction[1], direction[0], 0.0])
    if np.linalg.norm(horiz) < 1e-9:
        horiz = np.array([0.0, 1.0, 0.0])
    horiz /= np.linalg.norm(horiz)
    up = np.array([0.0, 0.0, 1.0])
    offsets = [np.zeros(3), horiz, -horiz, up, -up]
    yaw0 = problem.initial.yaw
    yaw_goal = yaw0 + math.remainder(problem.goal_yaw - yaw0, 2 * math.pi)
    n_free = layout.n_free_pos
    frac = np.arange(1, n_free + 1) / (n_free + 1)
    yfrac = np.arange(1, layout.n_free_yaw + 1) / (layout.n_free_yaw + 1)
    tau_mid = (np.arange(layout.n_intervals) + 0.5) / layout.n_intervals
    seeds = []
    for i in range(cfg.n_starts):
        off = offsets[i % len(offsets)] * cfg.seed_offset * (1 + i // len(offsets))
        interior = p0 + frac[:, None] * (goal - p0) + np.sin(np.pi * frac)[:, None] * off
        yaw_int = yaw0 + yfrac * (yaw_goal - yaw0)
        Q = np.concatenate([consts.S_inv @ np.stack([p0, problem.initial.velocity * D,
                                                     problem.initial.acceleration * D * D]),
                            interior, np.tile(goal, (3, 1))])
        planes = np.zeros((layout.n_objects, layout.n_intervals, 4))
        cents = _object_centroids(problem, prm, tau_mid, D)
        for o, cen in enumerate(cents):
            for j in range(layout.n_intervals):
                ego = Q[j:j + 4].mean(axis=0)
                dvec = cen[j] - ego
                gap = np.linalg.norm(dvec)
                n = dvec / gap if gap > 1e-9 else np.array([1.0, 0.0, 0.0])
                s = max(1.0, 4.0 / max(gap, 1e-3))
                planes[o, j, :3] = s * n
                planes[o, j, 3] = -s * n @ (0.5 * (cen[j] + ego))
        seeds.append(layout.pack(interior, goal, yaw_int, yaw_goal, D, planes))
    return seeds


def decode(x, problem: PlanningProblem, layout: Layout, consts):
    interior, terminal, yi, yt, D, planes = layout.split(np.asarray(x))
    x0 = problem.initial
    start = consts.S_inv @ np.stack([x0.position, x0.velocity * D, x0.acceleration * D * D])
    Q = np.concatenate([start, interior, np.tile(terminal, (3, 1))])
    ys = consts.Sy_inv @ np.array([x0.yaw, x0.yaw_rate * D])
    Y = np.concatenate([ys, yi, [yt, yt]])
    traj = SplineTrajectory(Q, Y, x0.t, x0.t + D)
    out = []
    for o in range(layout.n_objects):
        for j in range(layout.n_intervals):
            n = planes[o, j, :3]
            norm = np.linalg.norm(n)
            if norm == 0.0:
                continue
            out.append(SeparatingPlane(n / norm, planes[o, j, 3] / norm, o, j))
    return DecisionVariables(traj, tuple(out))


def _bounds(layout: Layout, cfg: PlannerConfig):
    b = [(None, None)] * layout.size
    b[layout.duration_index] = tuple(cfg.duration_bounds)
    lim = MAX_NORMAL / math.sqrt(3.0)
    start = layout.duration_index + 1
    for k in range(layout.n_objects * layout.n_intervals):
        for i in range(3):
            b[start + 4 * k + i] = (-lim, lim)
    return b


def _warm_start(x, fns, prm, bounds, cfg):
    """Quadratic-penalty descent with growing weight; stops once the residuals are met."""
    n_eval = 0
    for mu in cfg.penalty_schedule:
        prm = dict(prm, mu=mu)

        def fun(z):
            v, g = fns.penalty(z, prm)
            return float(v), np.asarray(g, dtype=float)

        res = minimize(fun, x, jac=True, method="L-BFGS-B", bounds=bounds,
                       options={"maxiter": cfg.max_iter, "ftol": 1e-12, "gtol": 1e-8})
        n_eval += res.nfev
        x = res.x
        if float(np.max(fns.report(x, prm)[1], initial=-np.inf)) <= 0.0:
            break
    return x, n_eval


def _polish(x, fns, prm, bounds, cfg):
    """SQP refinement with exact constraint Jacobians."""

    def fun(z):
        v, g = fns.cost_grad(z, prm)
        return float(v), np.asarray(g, dtype=float)

    cons = {"type": "ineq",
            "fun": lambda z: -np.asarray(fns.report(z, prm)[1], dtype=float),
            "jac": lambda z: -np.asarray(fns.residual_jac(z, prm), dtype=float)}
    with warnings.catch_warnings():
        # SLSQP clips its line-search steps to the bounds and says so
        warnings.simplefilter("ignore", RuntimeWarning)
        res = minimize(fun, x, jac=True, method="SLSQP", bounds=bounds, constraints=[cons],
                       options={"maxiter": cfg.polish_iter, "ftol": cfg.polish_ftol})
    return res.x, res.nfev


def solve(problem: PlanningProblem):
    """Best audited trajectory over all starts, or ``Infeasible``.

    Each start runs a penalty warm-up followed by SQP polishing; both end
    points are audited and the cheaper passing one is kept.
    """
    cfg = problem.config
    layout = layout_for(problem)
    fns, consts = compiled(layout)
    prm = {k: jnp.asarray(v) for k, v in _params(problem).items()}
    np_prm = _params(problem)
    bounds = _bounds(layout, cfg)
    best = None
    n_eval = 0
    reasons = []
    for idx, x in enumerate(_seeds(problem, layout, np_prm, consts)):
        x, k = _warm_start(x, fns, prm, bounds, cfg)
        n_eval += k
        candidates = [x]
        if cfg.polish_iter > 0:
            xp, k = _polish(x, fns, prm, bounds, cfg)
            n_eval += k
            if np.all(np.isfinite(xp)):
                candidates.insert(0, xp)
        for z in candidates:
            decision = decode(z, problem, layout, consts)
            rep = audit(decision.trajectory, problem, tol=cfg.feasibility_tol)
            if not rep.ok:
                reasons.append(f"start {idx}: {rep.violations[0]}")
                logger.debug("start %d rejected: %s", idx, "; ".join(rep.violations))
                continue
            c = cost(decision, problem)
            if best is None or c < best.cost:
                best = CommittedTrajectory(decision.trajectory, decision.planes, c, rep, idx)
            break
    if best is None:
        return Infeasible("no start passed the audit (" + "; ".join(reasons) + ")")
    return CommittedTrajectory(best.trajectory, best.planes, best.cost, best.audit,
                               best.start_index, n_eval)


class UncertaintyAwarePlanner(BaseEstimator):
    """Estimator-style wrapper: ``fit`` solves a problem, ``predict`` samples positions."""

    def __init__(self, config=None):
        self.config = config

    def fit(self, problem: PlanningProblem, y=None):
        if self.config is not None:
            problem = PlanningProblem(problem.initial, problem.goal_position, problem.goal_yaw,
                                      problem.obstacles, problem.peers, self.config)
        result = solve(problem)
        self.result_ = result
        self.feasible_ = bool(result)
        self.trajectory_ = result.trajectory if result else None
        return self

    def predict(self, t):
        check_is_fitted(self, "result_")
        if not self.feasible_:
            raise RuntimeError(f"planning failed: {self.result_.reason}")
        return self.trajectory_.position(t, hold=True)
