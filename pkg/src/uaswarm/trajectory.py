"""Clamped uniform B-spline trajectories for position (cubic) and yaw (quadratic)."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.interpolate import BSpline

from ._validation import check_points, check_vector
from .exceptions import DomainError
from .geometry import Pose3

POS_DEGREE = 3
YAW_DEGREE = 2
_T_TOL = 1e-9


def clamped_uniform_knots(n_intervals, degree, t0=0.0, t1=1.0):
    inner = np.linspace(t0, t1, n_intervals + 1)
    return np.concatenate([np.full(degree, t0), inner, np.full(degree, t1)])


def derivative_matrix(knots, degree, n_ctrl):
    """Map control points to derivative control points (same knot vector minus ends)."""
    M = np.zeros((n_ctrl - 1, n_ctrl))
    for i in range(n_ctrl - 1):
        c = degree / (knots[i + degree + 1] - knots[i + 1])
        M[i, i] = -c
        M[i, i + 1] = c
    return M


def derivative_chain(knots, degree, n_ctrl, order):
    """Product of derivative matrices up to ``order`` (identity for 0)."""
    M = np.eye(n_ctrl)
    k, p, n = np.asarray(knots, dtype=float), degree, n_ctrl
    for _ in range(order):
        M = derivative_matrix(k, p, n) @ M
        k, p, n = k[1:-1], p - 1, n - 1
    return M


def start_state_matrix(knots, degree, n_rows):
    """Rows mapping the first ``n_rows`` control points to derivatives 0..n_rows-1 at t_in.

    Inverting this gives the control points that reproduce an initial state.
    """
    n_ctrl = len(knots) - degree - 1
    rows = [derivative_chain(knots, degree, n_ctrl, r)[0, :n_rows] for r in range(n_rows)]
    return np.array(rows)


@dataclass(frozen=True)
class TrajectorySample:
    t: float
    position: np.ndarray
    velocity: np.ndarray
    acceleration: np.ndarray
    jerk: np.ndarray
    yaw: float
    yaw_rate: float
    yaw_accel: float


class SplineTrajectory:
    """Position + yaw trajectory on ``[t_in, T]``.

    Both splines share the same number of uniform intervals, so interval ``j``
    spans the same time window for position and yaw.
    """

    def __init__(self, pos_ctrl, yaw_ctrl, t_in, T):
        pos_ctrl = check_points(pos_ctrl, 3, "pos_ctrl", min_points=POS_DEGREE + 1)
        yaw_ctrl = check_vector(yaw_ctrl, name="yaw_ctrl")
        n_int = len(pos_ctrl) - POS_DEGREE
        if len(yaw_ctrl) - YAW_DEGREE != n_int:
            raise ValueError("position and yaw splines need the same interval count")
        if not T > t_in:
            raise ValueError("T must exceed t_in")
        self.pos_ctrl = pos_ctrl
        self.yaw_ctrl = yaw_ctrl
        self.t_in = float(t_in)
        self.T = float(T)
        self.pos_ctrl.setflags(write=False)
        self.yaw_ctrl.setflags(write=False)

    def __repr__(self):
        return (f"SplineTrajectory(t_in={self.t_in:g}, T={self.T:g}, "
                f"n_intervals={self.n_intervals})")

    @classmethod
    def stationary(cls, position, yaw, t_in, T, n_intervals=6):
        pos = np.tile(np.asarray(position, dtype=float), (n_intervals + POS_DEGREE, 1))
        return cls(pos, np.full(n_intervals + YAW_DEGREE, float(yaw)), t_in, T)

    @property
    def n_intervals(self):
        return len(self.pos_ctrl) - POS_DEGREE

    @property
    def duration(self):
        return self.T - self.t_in

    @cached_property
    def knots_pos(self):
        return clamped_uniform_knots(self.n_intervals, POS_DEGREE, self.t_in, self.T)

    @cached_property
    def knots_yaw(self):
        return clamped_uniform_knots(self.n_intervals, YAW_DEGREE, self.t_in, self.T)

    @cached_property
    def _pos_spline(self):
        return BSpline(self.knots_pos, self.pos_ctrl, POS_DEGREE, extrapolate=False)

    @cached_property
    def _yaw_spline(self):
        return BSpline(self.knots_yaw, self.yaw_ctrl, YAW_DEGREE, extrapolate=False)

    def _times(self, t, hold):
        t = np.asarray(t, dtype=float)
        if hold:
            return np.clip(t, self.t_in, self.T)
        if np.any(t < self.t_in - _T_TOL) or np.any(t > self.T + _T_TOL):
            raise DomainError(f"t outside trajectory domain [{self.t_in}, {self.T}]")
        return np.clip(t, self.t_in, self.T)

    def position(self, t, hold=False):
        return self._pos_spline(self._times(t, hold))

    def derivative(self, t, order, hold=False):
        """Position derivative of the given order; zero past the end when holding."""
        t = np.asarray(t, dtype=float)
        tc = self._times(t, hold)
        out = self._pos_spline(tc, nu=order) if order else self._pos_spline(tc)
        if hold and order:
            out = np.where(((t > self.T) | (t < self.t_in))[..., None], 0.0, out)
        return out

    def yaw(self, t, order=0, hold=False):
        t = np.asarray(t, dtype=float)
        tc = self._times(t, hold)
        out = self._yaw_spline(tc, nu=order) if order else self._yaw_spline(tc)
        if hold and order:
            out = np.where((t > self.T) | (t < self.t_in), 0.0, out)
        return out

    def evaluate(self, t, hold=False) -> TrajectorySample:
        t = float(t)
        p = self.position(t, hold)
        return TrajectorySample(
            t=t, position=p,
            velocity=self.derivative(t, 1, hold),
            acceleration=self.derivative(t, 2, hold),
            jerk=self.derivative(t, 3, hold),
            yaw=float(self.yaw(t, 0, hold)),
            yaw_rate=float(self.yaw(t, 1, hold)),
            yaw_accel=float(self.yaw(t, 2, hold)),
        )

    def pose3(self, t, hold=False) -> Pose3:
        p = self.position(t, hold)
        return Pose3.from_xyz_yaw(p[0], p[1], p[2], float(self.yaw(t, 0, hold)))

    def interval_bounds(self, j):
        h = self.duration / self.n_intervals
        return self.t_in + j * h, self.t_in + (j + 1) * h

    def interval_index(self, t):
        j = int(math.floor((float(t) - self.t_in) / self.duration * self.n_intervals))
        return min(max(j, 0), self.n_intervals - 1)

    def interval_hull(self, j):
        """Control points whose convex hull contains the curve over interval ``j``."""
        if not 0 <= j < self.n_intervals:
            raise IndexError(f"interval {j} out of range")
        return self.pos_ctrl[j:j + POS_DEGREE + 1].copy()

    def control_points(self, order):
        """Control points of the ``order``-th position derivative (time units)."""
        M = derivative_chain(self.knots_pos, POS_DEGREE, len(self.pos_ctrl), order)
        return M @ self.pos_ctrl

    def yaw_control_points(self, order):
        M = derivative_chain(self.knots_yaw, YAW_DEGREE, len(self.yaw_ctrl), order)
        return M @ self.yaw_ctrl

    def velocity_control_points(self):
        """Velocity control points grouped per interval (``V_j``)."""
        V = self.control_points(1)
        return [V[j:j + POS_DEGREE] for j in range(self.n_intervals)]

    def sample_uniform(self, n):
        """``n`` points at uniform parameter spacing including both endpoints."""
        if n < 2:
            raise ValueError("n must be >= 2")
        t = np.linspace(self.t_in, self.T, n)
        return t, self.position(t)

    def to_dict(self):
        return {
            "pos_ctrl": self.pos_ctrl.tolist(),
            "yaw_ctrl": self.yaw_ctrl.tolist(),
            "knots_pos": self.knots_pos.tolist(),
            "knots_yaw": self.knots_yaw.tolist(),
            "t_in": self.t_in,
            "T": self.T,
        }

    @classmethod
    def from_dict(cls, d):
        traj = cls(d["pos_ctrl"], d["yaw_ctrl"], d["t_in"], d["T"])
        for key in ("knots_pos", "knots_yaw"):
            if key in d and not np.allclose(d[key], getattr(traj, key), atol=1e-9):
                raise ValueError(f"{key} is not the clamped uniform knot vector")
        return traj

    def to_json(self):
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, s):
        return cls.from_dict(json.loads(s))


def evaluate(traj: SplineTrajectory, t) -> TrajectorySample:
    return traj.evaluate(t)


def interval_hull(traj: SplineTrajectory, j):
    return traj.interval_hull(j)


def velocity_control_points(traj: SplineTrajectory):
    return traj.velocity_control_points()


def sample_uniform(traj: SplineTrajectory, n):
    return traj.sample_uniform(n)[1]
