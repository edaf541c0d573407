"""Field-of-view keeping metrics along a flown trajectory."""

from __future__ import annotations

import numpy as np

from ..geometry import FORWARD_CAMERA, Pose3
from ..uncertainty import FovModel, camera_frame_point, fov_score


def visibility_stats(inside, dt):
    """Percentage of ``True`` samples and the longest ``True`` run times ``dt``."""
    inside = np.asarray(inside, dtype=bool).ravel()
    if dt <= 0:
        raise ValueError("dt must be positive")
    if inside.size == 0:
        return 0.0, 0.0
    longest = run = 0
    for v in inside:
        run = run + 1 if v else 0
        longest = max(longest, run)
    return 100.0 * float(inside.mean()), longest * dt


def in_fov(points, ego_positions, ego_yaws, fov: FovModel, mount: Pose3 = FORWARD_CAMERA):
    """Per-sample cone membership of ``points[k]`` seen from the ego pose at sample ``k``."""
    out = np.zeros(len(points), dtype=bool)
    for k, (p, e, yaw) in enumerate(zip(points, ego_positions, ego_yaws)):
        pose = Pose3.from_xyz_yaw(e[0], e[1], e[2], yaw)
        pc = camera_frame_point(p, pose, mount)
        if np.linalg.norm(pc) > 0:
            out[k] = fov_score(pc, fov.theta) > 0
    return out


def fov_metrics(traj, obstacles, fov: FovModel, dt, lookahead=1.0,
                mount: Pose3 = FORWARD_CAMERA, min_step=1e-3):
    """Known-obstacle and unknown-space FOV rates (%) and longest detections (s).

    ``obstacles`` are callables ``t -> position``.  The unknown-space target
    at time ``t`` is the trajectory point ``lookahead`` seconds later; samples
    where that point is within ``min_step`` of the agent (hovering at the end)
    are skipped.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    t = np.arange(traj.t_in, traj.T + 1e-12, dt)
    p = traj.position(t, hold=True)
    yaw = traj.yaw(t, hold=True)
    known = [in_fov(np.array([ob(tk) for tk in t]), p, yaw, fov, mount) for ob in obstacles]
    if known:
        rates = [visibility_stats(k, dt) for k in known]
        known_rate = float(np.mean([r[0] for r in rates]))
        known_run = float(max(r[1] for r in rates))
    else:
        known_rate, known_run = 0.0, 0.0
    ahead = traj.position(np.minimum(t + lookahead, traj.T), hold=True)
    moving = np.linalg.norm(ahead - p, axis=1) > min_step
    unknown = in_fov(ahead[moving], p[moving], yaw[moving], fov, mount)
    u_rate, u_run = visibility_stats(unknown, dt)
    return {"known_fov_rate": known_rate, "known_continuous": known_run,
            "unknown_fov_rate": u_rate, "unknown_continuous": u_run}
