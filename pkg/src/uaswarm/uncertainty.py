"""FOV-conditioned covariance propagation.

State ordering for the 9-dimensional obstacle state is
``[px, py, pz, vx, vy, vz, ax, ay, az]`` (constant-acceleration model).  The
observation model measures position only.  Only covariances are propagated:
means advance through ``F`` and no measurement realisations are drawn.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import chi2

from ._validation import check_covariance, check_vector, symmetrize
from .exceptions import DomainError
from .geometry import FORWARD_CAMERA, Pose3

logger = logging.getLogger(__name__)

STATE_DIM = 9
POS = slice(0, 3)


def constant_acceleration_F(dt):
    """Closed-form ``exp(A dt)`` for the per-axis triple integrator."""
    I = np.eye(3)
    F = np.eye(STATE_DIM)
    F[0:3, 3:6] = dt * I
    F[0:3, 6:9] = 0.5 * dt * dt * I
    F[3:6, 6:9] = dt * I
    return F


def position_selector():
    H = np.zeros((3, STATE_DIM))
    H[:, :3] = np.eye(3)
    return H


@dataclass(frozen=True, eq=False)
class LinearModel:
    F: np.ndarray
    H: np.ndarray = field(default_factory=position_selector)

    @classmethod
    def constant_acceleration(cls, dt):
        return cls(constant_acceleration_F(dt), position_selector())


@dataclass(frozen=True, eq=False)
class ObstacleBelief:
    mean: np.ndarray
    covariance: np.ndarray
    # set when a step fell back to open-loop propagation
    degraded: bool = False

    def __post_init__(self):
        object.__setattr__(self, "mean", check_vector(self.mean, STATE_DIM, "mean"))
        object.__setattr__(self, "covariance",
                           check_covariance(self.covariance, STATE_DIM, "covariance"))

    @property
    def position(self):
        return self.mean[POS]

    @property
    def position_covariance(self):
        return self.covariance[POS, POS]


@dataclass(frozen=True, eq=False)
class MotionUncertainty:
    covariance: np.ndarray
    degraded: bool = False

    @property
    def position_covariance(self):
        return self.covariance[POS, POS]


@dataclass(frozen=True, eq=False)
class FovModel:
    """Cone FOV about the camera optical axis plus the noise ceiling."""

    theta: float = 1.57
    r_max: np.ndarray = field(default_factory=lambda: 10.0 * np.eye(3))
    epsilon: float = 1e-6
    max_multiplier: float = 1e9

    def __post_init__(self):
        if not 0.0 < self.theta < 2.0 * math.pi:
            raise ValueError("theta must lie in (0, 2*pi)")
        if not self.epsilon > 0.0:
            raise ValueError("epsilon must be positive")
        object.__setattr__(self, "r_max", check_covariance(self.r_max, 3, "r_max"))


def fov_score(p_camera, theta):
    """Positive iff ``p_camera`` lies strictly inside the cone about +z."""
    p = np.asarray(p_camera, dtype=float)
    n = np.linalg.norm(p, axis=-1)
    if np.any(n <= 0.0):
        raise DomainError("fov_score undefined at the camera centre")
    return -math.cos(0.5 * theta) + p[..., 2] / n


def fov_noise_multiplier(f, fov: FovModel):
    """Scalar multiplier on ``R_max``; returns ``(multiplier, clamped)``."""
    den = 1.0 + f + fov.epsilon
    if den <= 0.0:
        return fov.max_multiplier, True
    m = (1.0 - f) / den
    if m > fov.max_multiplier:
        return fov.max_multiplier, True
    return m, False


def fov_noise(f, fov: FovModel):
    m, clamped = fov_noise_multiplier(f, fov)
    if clamped:
        logger.debug("R_FOV multiplier clamped at %g (f=%g)", m, f)
    return m * fov.r_max


def propagate_open_loop(P, F):
    P = np.asarray(P, dtype=float)
    return symmetrize(F @ P @ F.T)


def kalman_update(P_pred, H, R):
    """Measurement update of the covariance; ``None`` when S is singular."""
    S = symmetrize(H @ P_pred @ H.T + R)
    w = np.linalg.eigvalsh(S)
    if w[0] <= 1e-14 * max(1.0, w[-1]):
        return None
    K = np.linalg.solve(S, H @ P_pred).T
    P = (np.eye(P_pred.shape[0]) - K @ H) @ P_pred
    return symmetrize(P)


def camera_frame_point(p_world, ego: Pose3, mount: Pose3 = FORWARD_CAMERA):
    cam = ego.compose(mount)
    return cam.inverse().apply(p_world)


def propagate_step(belief: ObstacleBelief, model: LinearModel, ego: Pose3,
                   fov: FovModel, mount: Pose3 = FORWARD_CAMERA) -> ObstacleBelief:
    """One predict + FOV-weighted update of the obstacle covariance.

    ``R_FOV`` is evaluated at the *predicted* obstacle position seen from
    the ego camera at the same step.
    """
    F, H = model.F, model.H
    mean = F @ belief.mean
    P_pred = propagate_open_loop(belief.covariance, F)
    p_cam = camera_frame_point(mean[POS], ego, mount)
    if np.linalg.norm(p_cam) == 0.0:
        return ObstacleBelief(mean, P_pred, degraded=True)
    R = fov_noise(fov_score(p_cam, fov.theta), fov)
    P = kalman_update(P_pred, H, R)
    if P is None:
        return ObstacleBelief(mean, P_pred, degraded=True)
    return ObstacleBelief(mean, P)


def propagate_horizon(belief: ObstacleBelief, model: LinearModel, ego_trajectory, dt, N,
                      fov: FovModel, mount: Pose3 = FORWARD_CAMERA, t0=None):
    """Covariances at ``t0 + k dt`` for ``k = 1..N`` along the ego trajectory.

    ``ego_trajectory`` needs ``pose3(t)``; times past its end hold the final
    pose.  ``model.F`` must correspond to ``dt``.
    """
    if N < 1:
        raise ValueError("N must be >= 1")
    t0 = ego_trajectory.t_in if t0 is None else t0
    out = np.empty((N, STATE_DIM, STATE_DIM))
    b = belief
    for k in range(1, N + 1):
        b = propagate_step(b, model, ego_trajectory.pose3(t0 + k * dt, hold=True), fov, mount)
        out[k - 1] = b.covariance
    return out


def select_lookahead(step_times, sample_times):
    """Index of the first sample strictly later than each step time (-1: none)."""
    sample_times = np.asarray(sample_times, dtype=float)
    step_times = np.asarray(step_times, dtype=float)
    # tolerance absorbs rounding when a step lands exactly on a sample
    tol = 1e-9 * np.maximum(1.0, np.abs(step_times))
    idx = np.searchsorted(sample_times, step_times + tol, side="right")
    return np.where(idx < len(sample_times), idx, -1)


def propagate_motion_uncertainty(ego_poses, step_times, p_traj, p_traj_times, model: LinearModel,
                                 fov: FovModel, prior, mount: Pose3 = FORWARD_CAMERA):
    """Unknown-space covariance along the ego's own future path.

    At step ``k`` the measurement noise is ``R_FOV`` evaluated at the first
    sampled trajectory point lying strictly ahead in time; when none is left
    (or it coincides with the camera) the step is open loop.
    """
    ego_poses = list(ego_poses)
    if not ego_poses:
        return []
    p_traj = np.asarray(p_traj, dtype=float)
    if len(p_traj) == 0:
        raise ValueError("p_traj must be non-empty")
    look = select_lookahead(step_times, p_traj_times)
    P = check_covariance(prior, STATE_DIM, "prior")
    out = []
    for k, ego in enumerate(ego_poses):
        P_pred = propagate_open_loop(P, model.F)
        degraded = False
        if look[k] < 0:
            P = P_pred
        else:
            p_cam = camera_frame_point(p_traj[look[k]], ego, mount)
            if np.linalg.norm(p_cam) <= 1e-9:
                P = P_pred
            else:
                upd = kalman_update(P_pred, model.H, fov_noise(fov_score(p_cam, fov.theta), fov))
                degraded = upd is None
                P = P_pred if upd is None else upd
        out.append(MotionUncertainty(P, degraded))
    return out


def velocity_bound(P_pos, v_limit):
    """Element-wise ``v_limit / sqrt(diag(P_pos))``."""
    d = np.diagonal(np.asarray(P_pos, dtype=float), axis1=-2, axis2=-1)
    if np.any(d <= 0.0):
        raise DomainError("velocity bound needs a positive covariance diagonal")
    return np.asarray(v_limit, dtype=float) / np.sqrt(d)


def chi2_quantile(level, dof=3):
    return float(chi2.ppf(level, dof))


def confidence_ellipsoid(P_pos, level=0.95):
    """Semi-axes (ascending) and their directions (columns)."""
    if not 0.0 < level < 1.0:
        raise ValueError("level must lie in (0, 1)")
    P_pos = check_covariance(P_pos, 3, "P_pos")
    lam, vec = np.linalg.eigh(P_pos)
    q = chi2_quantile(level, 3)
    return np.sqrt(q * np.clip(lam, 0.0, None)), vec


def ellipsoid_halfwidths(P_pos, level=0.95):
    """Half-extents of the axis-aligned box bounding the confidence ellipsoid."""
    d = np.clip(np.diagonal(np.asarray(P_pos, dtype=float), axis1=-2, axis2=-1), 0.0, None)
    return np.sqrt(chi2_quantile(level, 3) * d)
