"""Run metrics computed from ground truth and from logged alignment estimates."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np


@dataclass
class Metrics:
    travel_time: float = math.nan
    collisions: int = 0
    known_fov_rate: float = math.nan
    known_continuous: float = math.nan
    unknown_fov_rate: float = math.nan
    unknown_continuous: float = math.nan
    x_err_mean: float = 0.0
    x_err_std: float = 0.0
    y_err_mean: float = 0.0
    y_err_std: float = 0.0
    yaw_err_mean: float = 0.0
    yaw_err_std: float = 0.0
    n_align_epochs: int = 0
    n_commits: int = 0
    n_aborts: int = 0

    def __post_init__(self):
        for name in ("known_fov_rate", "unknown_fov_rate"):
            v = getattr(self, name)
            if not math.isnan(v) and not 0.0 <= v <= 100.0:
                raise ValueError(f"{name} must lie in [0, 100]")

    def as_dict(self):
        return asdict(self)


def alignment_errors(estimates, truths):
    """Rows ``(x, y, yaw_rad)`` of ``estimate * truth^-1`` per epoch."""
    if len(estimates) != len(truths):
        raise ValueError("need one truth per estimate")
    out = [est.compose(tr.inverse()).as_array() for est, tr in zip(estimates, truths)]
    return np.array(out, dtype=float).reshape(-1, 3)


def alignment_error_stats(estimates, truths):
    """Mean absolute error and population std per axis; yaw in degrees."""
    E = alignment_errors(estimates, truths)
    if len(E) == 0:
        raise ValueError("need at least one estimate")
    E[:, 2] = np.degrees(E[:, 2])
    mean = np.mean(np.abs(E), axis=0)
    std = np.std(E, axis=0)
    return {"x_err_mean": float(mean[0]), "x_err_std": float(std[0]),
            "y_err_mean": float(mean[1]), "y_err_std": float(std[1]),
            "yaw_err_mean": float(mean[2]), "yaw_err_std": float(std[2])}


def _episodes(hit):
    hit = np.asarray(hit, dtype=bool)
    if hit.size == 0:
        return 0
    return int(hit[0]) + int(np.count_nonzero(hit[1:] & ~hit[:-1]))


def count_collisions(agent_paths, radii, obstacle_paths=(), half_extents=()):
    """Contact episodes between sampled truth paths.

    ``agent_paths`` maps an id to an ``(n, 3)`` array on a shared time grid.
    Agents are spheres; obstacles are axis-aligned boxes.
    """
    ids = sorted(agent_paths)
    total = 0
    pairs = []
    for k, a in enumerate(ids):
        for b in ids[k + 1:]:
            d = np.linalg.norm(agent_paths[a] - agent_paths[b], axis=1)
            n = _episodes(d < radii[a] + radii[b])
            if n:
                pairs.append((a, b, n))
            total += n
        for o, (path, ext) in enumerate(zip(obstacle_paths, half_extents)):
            gap = np.maximum(np.abs(agent_paths[a] - path) - np.asarray(ext), 0.0)
            n = _episodes(np.linalg.norm(gap, axis=1) < radii[a])
            if n:
                pairs.append((a, f"obstacle{o}", n))
            total += n
    return total, pairs

