"""Rigid-body poses, transforms and pinhole intrinsics.

Conventions
-----------
A pose ``X`` of frame B expressed in frame A doubles as the transform taking
B-coordinates to A-coordinates: ``p_A = X.apply(p_B)``.  ``compose(a, b)``
is ``a * b`` (apply ``b`` first).  Body frames are x-forward, y-left, z-up;
camera frames are x-right, y-down, z along the optical axis.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.transform import Rotation

TWO_PI = 2.0 * math.pi


def wrap_angle(a):
    """Wrap an angle (or array of angles) to (-pi, pi]."""
    w = np.mod(np.asarray(a, dtype=float) + math.pi, TWO_PI) - math.pi
    w = np.where(w <= -math.pi, w + TWO_PI, w)
    return float(w) if np.ndim(w) == 0 else w


def angle_diff(a, b):
    """Signed difference ``a - b`` wrapped to (-pi, pi]."""
    return wrap_angle(np.asarray(a) - np.asarray(b))


def rot2(yaw):
    c, s = math.cos(yaw), math.sin(yaw)
    return np.array([[c, -s], [s, c]])


@dataclass(frozen=True)
class Pose2:
    x: float = 0.0
    y: float = 0.0
    yaw: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "x", float(self.x))
        object.__setattr__(self, "y", float(self.y))
        object.__setattr__(self, "yaw", wrap_angle(self.yaw))

    @classmethod
    def identity(cls):
        return cls(0.0, 0.0, 0.0)

    @classmethod
    def from_matrix(cls, M):
        M = np.asarray(M, dtype=float)
        return cls(M[0, 2], M[1, 2], math.atan2(M[1, 0], M[0, 0]))

    @property
    def translation(self):
        return np.array([self.x, self.y])

    @property
    def rotation(self):
        return rot2(self.yaw)

    def as_matrix(self):
        M = np.eye(3)
        M[:2, :2] = self.rotation
        M[:2, 2] = self.translation
        return M

    def as_array(self):
        return np.array([self.x, self.y, self.yaw])

    def compose(self, other: Pose2) -> Pose2:
        t = self.translation + self.rotation @ other.translation
        return Pose2(t[0], t[1], self.yaw + other.yaw)

    def inverse(self) -> Pose2:
        t = -self.rotation.T @ self.translation
        return Pose2(t[0], t[1], -self.yaw)

    def apply(self, p):
        """Transform 2-D points (shape (2,) or (n, 2))."""
        p = np.asarray(p, dtype=float)
        return p @ self.rotation.T + self.translation

    def __matmul__(self, other):
        return self.compose(other)

    def isclose(self, other: Pose2, atol=1e-9):
        return (abs(self.x - other.x) <= atol and abs(self.y - other.y) <= atol
                and abs(angle_diff(self.yaw, other.yaw)) <= atol)


def _normalize_quat(q):
    q = np.asarray(q, dtype=float)
    n = np.linalg.norm(q)
    if n == 0.0:
        raise ValueError("zero quaternion")
    q = q / n
    # canonical hemisphere keeps equality checks meaningful
    return -q if q[0] < 0 else q


def _quat_mul(a, b):
    aw, ax, ay, az = a
    bw, bx, by, bz = b
    return np.array([
        aw * bw - ax * bx - ay * by - az * bz,
        aw * bx + ax * bw + ay * bz - az * by,
        aw * by - ax * bz + ay * bw + az * bx,
        aw * bz + ax * by - ay * bx + az * bw,
    ])


@dataclass(frozen=True, eq=False)
class Pose3:
    """SE(3) pose; rotation stored as a unit quaternion (w, x, y, z)."""

    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))
    quaternion: np.ndarray = field(default_factory=lambda: np.array([1.0, 0.0, 0.0, 0.0]))

    def __post_init__(self):
        t = np.asarray(self.translation, dtype=float).reshape(3)
        object.__setattr__(self, "translation", t)
        object.__setattr__(self, "quaternion", _normalize_quat(self.quaternion))

    @classmethod
    def identity(cls):
        return cls()

    @classmethod
    def from_rotation_matrix(cls, R, translation=(0.0, 0.0, 0.0)):
        xyzw = Rotation.from_matrix(np.asarray(R, dtype=float)).as_quat()
        return cls(translation, np.roll(xyzw, 1))

    @classmethod
    def from_xyz_yaw(cls, x, y, z, yaw):
        h = 0.5 * yaw
        return cls((x, y, z), (math.cos(h), 0.0, 0.0, math.sin(h)))

    @classmethod
    def from_pose2(cls, pose: Pose2, z=0.0):
        return cls.from_xyz_yaw(pose.x, pose.y, z, pose.yaw)

    @property
    def rotation(self):
        w, x, y, z = self.quaternion
        return np.array([
            [1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)],
            [2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)],
            [2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)],
        ])

    @property
    def yaw(self):
        R = self.rotation
        return math.atan2(R[1, 0], R[0, 0])

    def as_matrix(self):
        M = np.eye(4)
        M[:3, :3] = self.rotation
        M[:3, 3] = self.translation
        return M

    def to_pose2(self):
        return Pose2(self.translation[0], self.translation[1], self.yaw)

    def compose(self, other: Pose3) -> Pose3:
        t = self.translation + self.rotation @ other.translation
        return Pose3(t, _quat_mul(self.quaternion, other.quaternion))

    def inverse(self) -> Pose3:
        q = self.quaternion * np.array([1.0, -1.0, -1.0, -1.0])
        R_inv = self.rotation.T
        return Pose3(-R_inv @ self.translation, q)

    def apply(self, p):
        p = np.asarray(p, dtype=float)
        return p @ self.rotation.T + self.translation

    def __matmul__(self, other):
        return self.compose(other)

    def isclose(self, other: Pose3, atol=1e-9):
        dq = abs(float(np.dot(self.quaternion, other.quaternion)))
        return (np.allclose(self.translation, other.translation, atol=atol)
                and 1.0 - dq <= atol)


def compose(a, b):
    if type(a) is not type(b):
        raise TypeError("compose needs poses of the same dimensionality")
    return a.compose(b)


def inverse(a):
    return a.inverse()


def apply(a, p):
    return a.apply(p)


# Camera mounts (pose of the camera in the body frame).
FORWARD_CAMERA = Pose3.from_rotation_matrix([[0.0, 0.0, 1.0],
                                             [-1.0, 0.0, 0.0],
                                             [0.0, -1.0, 0.0]])
NADIR_CAMERA = Pose3.from_rotation_matrix([[0.0, -1.0, 0.0],
                                           [-1.0, 0.0, 0.0],
                                           [0.0, 0.0, -1.0]])


@dataclass(frozen=True)
class CameraIntrinsics:
    fx: float
    fy: float
    cx: float
    cy: float

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError("focal lengths must be positive")

    @property
    def matrix(self):
        return np.array([[self.fx, 0.0, self.cx],
                         [0.0, self.fy, self.cy],
                         [0.0, 0.0, 1.0]])

    def project(self, p_camera):
        """Pinhole projection of camera-frame points (z > 0) to pixels."""
        p = np.atleast_2d(np.asarray(p_camera, dtype=float))
        uv = np.column_stack([self.fx * p[:, 0] / p[:, 2] + self.cx,
                              self.fy * p[:, 1] / p[:, 2] + self.cy])
        return uv[0] if np.ndim(p_camera) == 1 else uv

    def backproject(self, u, v):
        """Camera-frame ray ``K^-1 [u, v, 1]^T`` (unit depth)."""
        return np.array([(u - self.cx) / self.fx, (v - self.cy) / self.fy, 1.0])
