"""Ground truth: moving obstacle, drift model, landmark layouts and scripted motion."""

from __future__ import annotations

import math

import numpy as np

from ..geometry import Pose2, Pose3
from ..mapping import GroundObject
from .scenario import CircleMotion, DriftSpec, ExchangeMotion, LandmarkLayout, TrefoilSpec


def trefoil(t, scale=1.0, period=20.0):
    """``scale * (sin u + 2 sin 2u, cos u - 2 cos 2u, -sin 3u)`` with ``u = 2 pi t / period``."""
    if period <= 0:
        raise ValueError("period must be positive")
    u = 2.0 * np.pi * np.asarray(t, dtype=float) / period
    p = np.stack([np.sin(u) + 2 * np.sin(2 * u), np.cos(u) - 2 * np.cos(2 * u), -np.sin(3 * u)],
                 axis=-1)
    return scale * p


def trefoil_state(t, spec: TrefoilSpec):
    """Position, velocity and acceleration of the obstacle centre at ``t``."""
    w = 2.0 * np.pi / spec.period
    u = w * (float(t) + spec.phase)
    s = spec.scale
    p = np.array([math.sin(u) + 2 * math.sin(2 * u), math.cos(u) - 2 * math.cos(2 * u),
                  -math.sin(3 * u)])
    v = w * np.array([math.cos(u) + 4 * math.cos(2 * u), -math.sin(u) + 4 * math.sin(2 * u),
                      -3 * math.cos(3 * u)])
    a = w * w * np.array([-math.sin(u) - 8 * math.sin(2 * u), -math.cos(u) + 8 * math.cos(2 * u),
                          9 * math.sin(3 * u)])
    return np.asarray(spec.center) + s * p, s * v, s * a


def trefoil_positions(t, spec: TrefoilSpec):
    return np.asarray(spec.center) + trefoil(np.asarray(t) + spec.phase, spec.scale, spec.period)


def drift_transform(spec: DriftSpec, t) -> Pose2:
    """World-frame offset applied on the left of the true pose at time ``t``."""
    if spec.kind == "constant":
        bx, by, byaw = spec.bias
        return Pose2(bx, by, math.radians(byaw))
    if spec.kind == "linear":
        rx, ry, ryaw = spec.rate
        return Pose2(rx * t, ry * t, math.radians(ryaw) * t)
    return Pose2.identity()


def inject_drift(true_pose: Pose2, spec: DriftSpec, t) -> Pose2:
    if t < 0:
        raise ValueError("t must be >= 0")
    return drift_transform(spec, t).compose(true_pose)


def lift(pose2: Pose2) -> Pose3:
    return Pose3.from_xyz_yaw(pose2.x, pose2.y, 0.0, pose2.yaw)


def make_landmarks(layout: LandmarkLayout, rng):
    """Ground objects for ``layout``; centroids sit at half the object height."""
    e = layout.extent
    if layout.kind == "pads":
        g = np.arange(-e, e + 1e-9, layout.spacing)
        xy = np.array([(x, y) for x in g for y in g], dtype=float)
        xy += rng.uniform(-layout.jitter, layout.jitter, xy.shape)
        h = np.zeros(len(xy))
        size = np.full(len(xy), layout.size)
    else:
        xy = rng.uniform(-e, e, (layout.count, 2))
        h = rng.uniform(layout.height_range[0], layout.height_range[1], layout.count)
        size = layout.size * rng.uniform(0.6, 1.4, layout.count)
    return [GroundObject(k, np.array([xy[k, 0], xy[k, 1], 0.5 * h[k]]), float(size[k]))
            for k in range(len(xy))]


def scripted_pose(motion, t):
    """True position and yaw of a circle or exchange agent."""
    if isinstance(motion, CircleMotion):
        om = motion.speed / motion.radius
        phi = math.radians(motion.phase_deg) + om * t
        cx, cy = motion.center
        p = np.array([cx + motion.radius * math.cos(phi), cy + motion.radius * math.sin(phi),
                      motion.altitude])
        return p, phi + 0.5 * math.pi
    if isinstance(motion, ExchangeMotion):
        w = 2.0 * math.pi / motion.period
        sgn = -1.0 if motion.reverse else 1.0
        L, W = motion.half_length, motion.half_width
        p = np.array([-sgn * L * math.cos(w * t), sgn * W * math.sin(w * t), motion.altitude])
        v = np.array([sgn * L * w * math.sin(w * t), sgn * W * w * math.cos(w * t)])
        if np.hypot(*v) < 1e-12:
            # turning point of a zero-width swap: face the way it is about to go
            v = np.array([sgn * math.cos(w * t), 0.0])
        return p, math.atan2(v[1], v[0])
    raise TypeError(f"no scripted motion for {type(motion).__name__}")
