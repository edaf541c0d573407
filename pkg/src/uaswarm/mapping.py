"""Per-agent maps of static ground landmarks.

Detections are synthetic pinhole projections of known objects.  They are
pushed back to the ground plane through whatever camera pose the agent
believes it has, fused into the map with a global-nearest-neighbour
association and a 2D Kalman update, and forgotten after ``kappa`` frames
without a sighting.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment
from sklearn.base import BaseEstimator

from ._validation import check_covariance, check_vector, symmetrize
from .exceptions import NoIntersectionError
from .geometry import CameraIntrinsics, Pose3
from .uncertainty import chi2_quantile, fov_score

DEFAULT_INTRINSICS = CameraIntrinsics(320.0, 320.0, 320.0, 240.0)


def tilted_camera(pitch):
    """Forward-looking camera mount pitched down by ``pitch`` radians.

    Camera axes: z along the optical axis, x to the image right, y down.
    """
    c, s = math.cos(pitch), math.sin(pitch)
    fwd = np.array([c, 0.0, -s])
    right = np.array([0.0, -1.0, 0.0])
    down = np.cross(fwd, right)
    return Pose3.from_rotation_matrix(np.column_stack([right, down, fwd]))


@dataclass(frozen=True)
class GroundObject:
    """A true object; ``centroid`` is the 3D point whose image is the detection centroid."""

    id: int
    centroid: np.ndarray
    size: float = 0.5

    def __post_init__(self):
        object.__setattr__(self, "centroid", check_vector(self.centroid, 3, "centroid"))


@dataclass(frozen=True)
class Detection:
    u: float
    v: float
    stamp: float
    object_id: int = -1

    def __post_init__(self):
        if not (math.isfinite(self.u) and math.isfinite(self.v)):
            raise ValueError("detection pixels must be finite")


@dataclass(frozen=True)
class SyntheticDetector:
    mount: Pose3 = field(default_factory=lambda: tilted_camera(math.radians(40.0)))
    intrinsics: CameraIntrinsics = DEFAULT_INTRINSICS
    fov_angle: float = 1.57
    pixel_sigma: float = 1.0
    detection_probability: float = 0.9
    min_size_px: float = 4.0
    max_size_px: float = 400.0
    max_range: float = 15.0

    def __post_init__(self):
        if self.pixel_sigma < 0:
            raise ValueError("pixel_sigma must be >= 0")
        if not 0.0 <= self.detection_probability <= 1.0:
            raise ValueError("detection_probability must lie in [0, 1]")


def detect(objects, truth_pose: Pose3, detector: SyntheticDetector, rng, stamp=0.0):
    """Detections of ``objects`` seen from the true body pose.

    Objects outside the view cone, beyond ``max_range`` or with an apparent
    size outside the filter band are skipped; the rest are kept with
    probability ``detection_probability`` and get Gaussian pixel noise.
    """
    cam = truth_pose.compose(detector.mount)
    inv = cam.inverse()
    K = detector.intrinsics
    out = []
    for ob in objects:
        pc = inv.apply(ob.centroid)
        depth = float(np.linalg.norm(pc))
        if pc[2] <= 0 or depth > detector.max_range or fov_score(pc, detector.fov_angle) <= 0:
            continue
        size_px = K.fx * ob.size / pc[2]
        if not detector.min_size_px <= size_px <= detector.max_size_px:
            continue
        keep = rng.random() < detector.detection_probability
        noise = rng.normal(0.0, 1.0, 2) * detector.pixel_sigma
        if not keep:
            continue
        u, v = K.project(pc) + noise
        out.append(Detection(float(u), float(v), float(stamp), ob.id))
    return out


def project_to_ground(d: Detection, camera_pose: Pose3, intrinsics: CameraIntrinsics):
    """Intersect the detection's viewing ray with ``z = 0``; returns ``(x, y)``."""
    ray = camera_pose.rotation @ intrinsics.backproject(d.u, d.v)
    origin = camera_pose.translation
    if abs(ray[2]) < 1e-12:
        raise NoIntersectionError("viewing ray is parallel to the ground")
    lam = -origin[2] / ray[2]
    if lam <= 0:
        raise NoIntersectionError("viewing ray points away from the ground")
    return (origin + lam * ray)[:2]


def range_stretched_covariance(p, camera_position, sigma_t=0.1, stretch=3.0):
    """Covariance with std ``stretch * sigma_t`` along the ground range direction."""
    p = check_vector(p, 2, "p")
    c = check_vector(camera_position, 3, "camera_position")
    d = p - c[:2]
    n = np.linalg.norm(d)
    if n < 1e-9:
        return sigma_t ** 2 * np.eye(2)
    e = d / n
    tangent = np.array([-e[1], e[0]])
    return ((stretch * sigma_t) ** 2 * np.outer(e, e) + sigma_t ** 2 * np.outer(tangent, tangent))


@dataclass
class Landmark:
    id: int
    position: np.ndarray
    covariance: np.ndarray
    last_seen: float
    observation_count: int = 1
    missed_frames: int = 0

    def to_dict(self):
        return {"id": self.id, "position": self.position.tolist(),
                "covariance": self.covariance.tolist(), "last_seen": self.last_seen,
                "observation_count": self.observation_count,
                "missed_frames": self.missed_frames}

    @classmethod
    def from_dict(cls, d):
        return cls(int(d["id"]), check_vector(d["position"], 2, "position"),
                   check_covariance(d["covariance"], 2, "covariance"), float(d["last_seen"]),
                   int(d.get("observation_count", 1)), int(d.get("missed_frames", 0)))


class LocalMap:
    """Landmarks in one agent's (possibly drifted) frame, keyed by never-reused ids."""

    def __init__(self, owner=0, frame=None):
        self.owner = owner
        self.frame = frame if frame is not None else f"local_{owner}"
        self.landmarks = {}
        self.next_id = 0
        self.stamp = 0.0

    def add(self, position, covariance, now):
        lm = Landmark(self.next_id, np.array(position, dtype=float),
                      symmetrize(np.asarray(covariance, dtype=float)), float(now))
        self.landmarks[lm.id] = lm
        self.next_id += 1
        return lm

    def __len__(self):
        return len(self.landmarks)

    def __iter__(self):
        return iter(self.landmarks.values())

    def positions(self):
        return np.array([lm.position for lm in self], dtype=float).reshape(-1, 2)

    def covariances(self):
        return np.array([lm.covariance for lm in self], dtype=float).reshape(-1, 2, 2)

    def to_dict(self):
        return {"owner": self.owner, "frame": self.frame, "stamp": self.stamp,
                "next_id": self.next_id, "landmarks": [lm.to_dict() for lm in self]}

    def to_json(self):
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, d):
        m = cls(d["owner"], d["frame"])
        m.stamp = float(d.get("stamp", 0.0))
        for ld in d["landmarks"]:
            lm = Landmark.from_dict(ld)
            m.landmarks[lm.id] = lm
        m.next_id = max([int(d.get("next_id", 0))] + [i + 1 for i in m.landmarks])
        return m

    @classmethod
    def from_json(cls, s):
        return cls.from_dict(json.loads(s))


def hungarian(cost, sentinel=1e9):
    """Minimum-cost assignment as ``(row, col)`` pairs; entries at or above ``sentinel`` are unassigned."""
    C = np.asarray(cost, dtype=float)
    if C.ndim != 2:
        raise ValueError("cost must be a matrix")
    if C.size == 0:
        return []
    C = np.where(np.isfinite(C), np.minimum(C, sentinel), sentinel)
    rows, cols = linear_sum_assignment(C)
    return [(int(r), int(c)) for r, c in zip(rows, cols) if C[r, c] < sentinel]


@dataclass
class Association:
    matches: list
    new: list
    missed: list


def associate_gnn(positions, covariances, local_map: LocalMap, gate=0.99):
    """Match projected detections to landmarks by gated Mahalanobis distance.

    ``matches`` holds ``(detection index, landmark id, squared distance)``.
    """
    Z = np.asarray(positions, dtype=float).reshape(-1, 2)
    R = np.asarray(covariances, dtype=float).reshape(-1, 2, 2)
    ids = list(local_map.landmarks)
    if not ids or not len(Z):
        return Association([], list(range(len(Z))), ids)
    thr = chi2_quantile(gate, 2)
    L = local_map.positions()
    S = local_map.covariances()[None, :, :, :] + R[:, None, :, :]
    diff = Z[:, None, :] - L[None, :, :]
    d2 = np.einsum("ijk,ijk->ij", diff, np.linalg.solve(S, diff[..., None])[..., 0])
    sentinel = 1e9
    cost = np.where(d2 <= thr, d2, sentinel)
    pairs = hungarian(cost, sentinel)
    matches = [(i, ids[j], float(d2[i, j])) for i, j in pairs]
    used_d = {i for i, _ in pairs}
    used_l = {j for _, j in pairs}
    return Association(matches, [i for i in range(len(Z)) if i not in used_d],
                       [ids[j] for j in range(len(ids)) if j not in used_l])


def kalman_fuse(x, P, z, R):
    """Fuse a direct 2D position measurement into ``(x, P)``."""
    S = P + R
    K = np.linalg.solve(S.T, P.T).T
    x_new = x + K @ (z - x)
    P_new = symmetrize((np.eye(2) - K) @ P)
    return x_new, P_new


def update_map(local_map: LocalMap, association: Association, positions, covariances, kappa, now,
               process_noise=0.0):
    """Fuse matches, add new landmarks and drop those missed ``kappa`` frames in a row.

    ``process_noise`` (m/sqrt(s)) lets a landmark's position random-walk
    between observations: before fusing, its covariance grows by
    ``process_noise**2 * (now - last_seen)``. With odometry drift the map
    frame itself moves, so a positive value keeps landmarks from lagging.
    """
    if kappa < 1:
        raise ValueError("kappa must be >= 1")
    if process_noise < 0:
        raise ValueError("process_noise must be >= 0")
    Z = np.asarray(positions, dtype=float).reshape(-1, 2)
    R = np.asarray(covariances, dtype=float).reshape(-1, 2, 2)
    for i, lid, _ in association.matches:
        lm = local_map.landmarks[lid]
        P = lm.covariance + process_noise ** 2 * max(float(now) - lm.last_seen, 0.0) * np.eye(2)
        lm.position, lm.covariance = kalman_fuse(lm.position, P, Z[i], R[i])
        lm.last_seen = float(now)
        lm.observation_count += 1
        lm.missed_frames = 0
    for lid in association.missed:
        lm = local_map.landmarks[lid]
        lm.missed_frames += 1
        if lm.missed_frames >= kappa:
            del local_map.landmarks[lid]
    for i in association.new:
        local_map.add(Z[i], R[i], now)
    local_map.stamp = float(now)
    return local_map


class LandmarkMapper(BaseEstimator):
    """Incremental map builder.

    ``partial_fit`` consumes one frame of detections together with the
    camera pose the agent believes in; ``transform`` returns landmark
    positions.
    """

    def __init__(self, intrinsics=DEFAULT_INTRINSICS, sigma_t=0.1, stretch=3.0, gate=0.99,
                 kappa=20, owner=0, process_noise=0.0):
        self.intrinsics = intrinsics
        self.sigma_t = sigma_t
        self.stretch = stretch
        self.gate = gate
        self.kappa = kappa
        self.owner = owner
        self.process_noise = process_noise

    def _measurements(self, detections, camera_pose):
        Z, R = [], []
        for d in detections:
            try:
                p = project_to_ground(d, camera_pose, self.intrinsics)
            except NoIntersectionError:
                continue
            Z.append(p)
            R.append(range_stretched_covariance(p, camera_pose.translation, self.sigma_t,
                                                self.stretch))
        return np.array(Z).reshape(-1, 2), np.array(R).reshape(-1, 2, 2)

    def partial_fit(self, detections, camera_pose: Pose3, now):
        if not hasattr(self, "map_"):
            self.map_ = LocalMap(self.owner)
            self.n_frames_ = 0
        Z, R = self._measurements(detections, camera_pose)
        assoc = associate_gnn(Z, R, self.map_, self.gate)
        update_map(self.map_, assoc, Z, R, self.kappa, now, self.process_noise)
        self.n_frames_ += 1
        self.last_association_ = assoc
        return self

    def fit(self, frames):
        """``frames``: iterable of ``(detections, camera_pose, stamp)``."""
        if hasattr(self, "map_"):
            del self.map_
        for dets, pose, stamp in frames:
            self.partial_fit(dets, pose, stamp)
        return self

    def transform(self, X=None):
        return self.map_.positions()
