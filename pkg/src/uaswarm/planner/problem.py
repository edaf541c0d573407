"""Planner configuration, problem description and result types."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .._validation import check_vector
from ..geometry import FORWARD_CAMERA, Pose3
from ..trajectory import SplineTrajectory
from ..uncertainty import FovModel, ObstacleBelief


def _vec3(v, name):
    a = np.broadcast_to(np.asarray(v, dtype=float), (3,)).copy()
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name} must be finite")
    return a


@dataclass(frozen=True, eq=False)
class PlannerConfig:
    """Weights, limits and solver settings.

    ``yaw_rate_max`` bounds the yaw-rate control points; ``yaw_max`` (off by
    default) bounds the yaw control points themselves.  ``v_limit`` is the
    numerator of the unknown-space velocity bound and ``v_cap`` the hard
    per-axis speed limit applied in every case.
    """

    n_intervals: int = 6
    steps_per_interval: int = 3
    n_traj_samples: int = 10
    alpha_jerk: float = 0.1
    alpha_yaw: float = 0.1
    alpha_time: float = 1.0
    alpha_goal: float = 100.0
    alpha_goal_yaw: float = 10.0
    a_max: np.ndarray = field(default_factory=lambda: np.full(3, 3.0))
    j_max: np.ndarray = field(default_factory=lambda: np.full(3, 8.0))
    yaw_rate_max: float = 1.5
    yaw_max: float | None = None
    v_cap: np.ndarray = field(default_factory=lambda: np.full(3, 2.0))
    v_limit: np.ndarray = field(default_factory=lambda: np.full(3, 3.0))
    agent_radius: float = 0.3
    fov: FovModel = field(default_factory=FovModel)
    mount: Pose3 = FORWARD_CAMERA
    motion_prior: np.ndarray = field(default_factory=lambda: 0.1 * np.eye(9))
    use_motion_uncertainty: bool = True
    confidence: float = 0.95
    plane_margin: float = 1e-4
    tightening: float = 0.02
    n_starts: int = 4
    max_iter: int = 100
    penalty_schedule: tuple = (1e2, 1e3)
    polish_iter: int = 100
    polish_ftol: float = 1e-6
    feasibility_tol: float = 1e-6
    duration_bounds: tuple = (0.5, 60.0)
    horizon_radius: float = math.inf
    goal_tolerance: float = math.inf
    workspace_lower: np.ndarray | None = None
    workspace_upper: np.ndarray | None = None
    peer_margin: float = 0.0
    seed_offset: float = 2.0

    def __post_init__(self):
        for name in ("a_max", "j_max", "v_cap", "v_limit"):
            v = _vec3(getattr(self, name), name)
            if np.any(v <= 0):
                raise ValueError(f"{name} must be positive")
            object.__setattr__(self, name, v)
        for name in ("alpha_jerk", "alpha_yaw", "alpha_time", "alpha_goal", "alpha_goal_yaw"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        for name in ("yaw_rate_max", "agent_radius", "plane_margin", "horizon_radius",
                     "goal_tolerance"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.yaw_max is not None and not self.yaw_max > 0:
            raise ValueError("yaw_max must be positive")
        if self.n_intervals < 3:
            raise ValueError("n_intervals must be >= 3")
        if self.steps_per_interval < 1 or self.n_traj_samples < 2 or self.n_starts < 1:
            raise ValueError("invalid sampling or start counts")
        if not 0.0 <= self.tightening < 0.5:
            raise ValueError("tightening must lie in [0, 0.5)")
        lo, hi = self.duration_bounds
        if not 0 < lo < hi:
            raise ValueError("duration_bounds must satisfy 0 < lo < hi")
        prior = np.asarray(self.motion_prior, dtype=float)
        if prior.shape != (9, 9):
            raise ValueError("motion_prior must be 9x9")
        object.__setattr__(self, "motion_prior", prior)
        for name in ("workspace_lower", "workspace_upper"):
            if getattr(self, name) is not None:
                object.__setattr__(self, name, _vec3(getattr(self, name), name))

    @property
    def n_steps(self):
        return self.n_intervals * self.steps_per_interval

    def replace(self, **changes):
        kw = {f: getattr(self, f) for f in self.__dataclass_fields__}
        kw.update(changes)
        return PlannerConfig(**kw)


@dataclass(frozen=True, eq=False)
class InitialState:
    position: np.ndarray
    velocity: np.ndarray = field(default_factory=lambda: np.zeros(3))
    acceleration: np.ndarray = field(default_factory=lambda: np.zeros(3))
    yaw: float = 0.0
    yaw_rate: float = 0.0
    t: float = 0.0

    def __post_init__(self):
        for name in ("position", "velocity", "acceleration"):
            object.__setattr__(self, name, check_vector(getattr(self, name), 3, name))
        if not (math.isfinite(self.yaw) and math.isfinite(self.yaw_rate)):
            raise ValueError("yaw state must be finite")
        if not self.t >= 0:
            raise ValueError("t_in must be >= 0")

    @classmethod
    def from_trajectory(cls, traj: SplineTrajectory, t):
        s = traj.evaluate(t, hold=True)
        return cls(s.position, s.velocity, s.acceleration, s.yaw, s.yaw_rate, float(t))


@dataclass(frozen=True, eq=False)
class Obstacle:
    """A known obstacle: constant-acceleration belief about its centre plus box half-extents.

    The belief is stamped at the planning start time.
    """

    belief: ObstacleBelief
    half_extent: np.ndarray = field(default_factory=lambda: np.full(3, 0.3))

    def __post_init__(self):
        e = _vec3(self.half_extent, "half_extent")
        if np.any(e < 0):
            raise ValueError("half_extent must be >= 0")
        object.__setattr__(self, "half_extent", e)

    def mean_position(self, dt):
        m = self.belief.mean
        dt = np.asarray(dt, dtype=float)[..., None]
        return m[0:3] + m[3:6] * dt + 0.5 * m[6:9] * dt * dt

    def hull(self):
        corners = np.array([[sx, sy, sz] for sx in (-1, 1) for sy in (-1, 1) for sz in (-1, 1)])
        return self.belief.position + corners * self.half_extent


@dataclass(frozen=True, eq=False)
class PeerTrajectory:
    trajectory: SplineTrajectory
    radius: float = 0.3
    agent_id: int = -1

    def __post_init__(self):
        if not self.radius >= 0:
            raise ValueError("radius must be >= 0")


@dataclass(frozen=True, eq=False)
class PlanningProblem:
    initial: InitialState
    goal_position: np.ndarray
    goal_yaw: float = 0.0
    obstacles: tuple = ()
    peers: tuple = ()
    config: PlannerConfig = field(default_factory=PlannerConfig)

    def __post_init__(self):
        object.__setattr__(self, "goal_position", check_vector(self.goal_position, 3, "goal_position"))
        if not math.isfinite(self.goal_yaw):
            raise ValueError("goal_yaw must be finite")
        object.__setattr__(self, "obstacles", tuple(self.obstacles))
        object.__setattr__(self, "peers", tuple(self.peers))

    @property
    def t_in(self):
        return self.initial.t

    def local_goal(self):
        """Goal clipped to the planning horizon around the start position."""
        p0 = self.initial.position
        d = self.goal_position - p0
        r = float(np.linalg.norm(d))
        R = self.config.horizon_radius
        return self.goal_position.copy() if r <= R else p0 + d * (R / r)


@dataclass(frozen=True, eq=False)
class SeparatingPlane:
    normal: np.ndarray
    offset: float
    obstacle: int
    interval: int

    def __post_init__(self):
        n = check_vector(self.normal, 3, "normal")
        norm = np.linalg.norm(n)
        if abs(norm - 1.0) > 1e-9:
            raise ValueError("plane normal must be a unit vector")
        object.__setattr__(self, "normal", n)

    def signed(self, points):
        return np.asarray(points, dtype=float) @ self.normal + self.offset


@dataclass(frozen=True, eq=False)
class DecisionVariables:
    trajectory: SplineTrajectory
    planes: tuple = ()

    @property
    def T(self):
        return self.trajectory.T


@dataclass(frozen=True, eq=False)
class AuditReport:
    ok: bool
    violations: tuple
    min_clearance: float
    n_samples: int


@dataclass(frozen=True, eq=False)
class CommittedTrajectory:
    trajectory: SplineTrajectory
    planes: tuple
    cost: float
    audit: AuditReport
    start_index: int
    n_evaluations: int = 0


@dataclass(frozen=True)
class Infeasible:
    reason: str

    def __bool__(self):
        return False
