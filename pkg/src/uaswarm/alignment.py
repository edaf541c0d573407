"""Pairwise frame alignment from two landmark maps.

Cross-map landmark pairs are scored for mutual geometric consistency
(a rigid motion preserves intra-map distances), the heaviest consistent set
is found exactly by branch and bound, and a recency-weighted Arun fit gives
the SE(2) transform taking points of map ``j`` into map ``i``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator

from ._validation import check_points
from .exceptions import DegenerateGeometryError, DomainError, InsufficientOverlapError
from .geometry import Pose2, rot2
from .mapping import LocalMap
from .trajectory import SplineTrajectory

MIN_INLIERS = 3


def consistency_weight(d_i, d_j, eps_c=0.3):
    """``max(0, 1 - |d_i - d_j| / eps_c)``; vectorised."""
    if eps_c <= 0:
        raise ValueError("eps_c must be positive")
    return np.maximum(0.0, 1.0 - np.abs(np.asarray(d_i) - np.asarray(d_j)) / eps_c)


def consistency_edge(pair_a, pair_b, map_i, map_j, eps_c=0.3):
    """Weight between candidates ``(id in i, id in j)``; 0 if they share a landmark."""
    (ai, aj), (bi, bj) = pair_a, pair_b
    if ai == bi or aj == bj:
        return 0.0
    pi = _positions_of(map_i)
    pj = _positions_of(map_j)
    d_i = np.linalg.norm(pi[ai] - pi[bi])
    d_j = np.linalg.norm(pj[aj] - pj[bj])
    return float(consistency_weight(d_i, d_j, eps_c))


def _positions_of(m):
    if isinstance(m, LocalMap):
        return {lm.id: lm.position for lm in m}
    return m


@dataclass(frozen=True, eq=False)
class ConsistencyGraph:
    """Candidates ``(id_i, id_j)`` and a symmetric weight matrix with zero diagonal."""

    candidates: tuple
    weights: np.ndarray

    def __post_init__(self):
        W = np.asarray(self.weights, dtype=float)
        n = len(self.candidates)
        if W.shape != (n, n):
            raise ValueError("weights must be n x n")
        if not np.allclose(W, W.T) or np.any(np.diag(W) != 0):
            raise ValueError("weights must be symmetric with zero diagonal")
        object.__setattr__(self, "weights", W)

    def __len__(self):
        return len(self.candidates)


def build_graph(candidates, pos_i, pos_j, eps_c=0.3):
    """Consistency graph over ``candidates`` given id -> position maps."""
    cand = tuple((int(a), int(b)) for a, b in candidates)
    n = len(cand)
    if n == 0:
        return ConsistencyGraph((), np.zeros((0, 0)))
    A = np.array([pos_i[a] for a, _ in cand])
    B = np.array([pos_j[b] for _, b in cand])
    dA = np.linalg.norm(A[:, None] - A[None], axis=-1)
    dB = np.linalg.norm(B[:, None] - B[None], axis=-1)
    W = consistency_weight(dA, dB, eps_c)
    ia = np.array([a for a, _ in cand])
    ib = np.array([b for _, b in cand])
    shared = (ia[:, None] == ia[None]) | (ib[:, None] == ib[None])
    W[shared] = 0.0
    return ConsistencyGraph(cand, W)


def set_weight(graph: ConsistencyGraph, members):
    idx = np.asarray(list(members), dtype=int)
    if idx.size < 2:
        return 0.0
    return float(graph.weights[np.ix_(idx, idx)].sum() / 2.0)


def max_consistent_set(graph: ConsistencyGraph):
    """Exact maximum of the summed pairwise weight over mutually consistent subsets.

    Members must pairwise have positive weight (which also rules out
    reusing a landmark).  Returns candidate indices, sorted.  Ties keep the
    first set found in degree order, so a graph without edges yields its
    first candidate.
    """
    n = len(graph)
    if n == 0:
        return []
    W = graph.weights
    adj = W > 0
    order = np.argsort(-W.sum(axis=1), kind="stable")
    best = [[int(order[0])], 0.0]

    def grow(members, value, gains, cand):
        # gains[k]: summed weight from candidate cand[k] to the current members
        if value > best[1] + 1e-12:
            best[0], best[1] = list(members), value
        if not cand:
            return
        c = np.asarray(cand)
        sub = W[np.ix_(c, c)]
        # each pair inside the remaining pool is split evenly between its two ends
        optimistic = gains + 0.5 * sub.sum(axis=1)
        if value + optimistic.sum() <= best[1] + 1e-12:
            return
        for k in range(len(cand)):
            if value + optimistic[k:].sum() <= best[1] + 1e-12:
                return
            v = cand[k]
            rest = [cand[m] for m in range(k + 1, len(cand)) if adj[v, cand[m]]]
            rest_gain = np.array([gains[m] + W[v, cand[m]] for m in range(k + 1, len(cand))
                                  if adj[v, cand[m]]])
            members.append(v)
            grow(members, value + gains[k], rest_gain, rest)
            members.pop()

    for start_pos in range(n):
        s = int(order[start_pos])
        later = [int(u) for u in order[start_pos + 1:] if adj[s, u]]
        if not later:
            continue
        gains = W[s, later]
        if 0.5 * W[np.ix_(later, later)].sum() + gains.sum() <= best[1] + 1e-12:
            continue
        grow([s], 0.0, gains, later)
    return sorted(best[0])


def recency_weights(delta_i, delta_j, frame_period=0.2):
    """``1 / (delta_i * delta_j)`` with both ages clamped below at ``frame_period``."""
    if frame_period <= 0:
        raise DomainError("frame_period must be positive")
    di = np.maximum(np.asarray(delta_i, dtype=float), frame_period)
    dj = np.maximum(np.asarray(delta_j, dtype=float), frame_period)
    if np.any(~np.isfinite(di)) or np.any(~np.isfinite(dj)):
        raise DomainError("ages must be finite")
    return 1.0 / (di * dj)


def weighted_arun(points_j, points_i, weights=None):
    """Pose2 ``X`` minimising ``sum w_k |X p_j,k - p_i,k|^2``."""
    Pj = check_points(points_j, 2, "points_j")
    Pi = check_points(points_i, 2, "points_i")
    if Pj.shape != Pi.shape:
        raise ValueError("point sets must have equal shape")
    w = np.ones(len(Pj)) if weights is None else np.asarray(weights, dtype=float)
    if w.shape != (len(Pj),) or np.any(w < 0) or not np.all(np.isfinite(w)):
        raise ValueError("weights must be finite, non-negative, one per pair")
    if np.count_nonzero(w) < MIN_INLIERS:
        raise InsufficientOverlapError(f"need at least {MIN_INLIERS} weighted pairs")
    w = w / w.sum()
    cj = w @ Pj
    ci = w @ Pi
    Qj = Pj - cj
    Qi = Pi - ci
    spread = np.linalg.eigvalsh((Qj * w[:, None]).T @ Qj)
    if spread[-1] <= 1e-18 or spread[0] <= 1e-10 * spread[-1]:
        raise DegenerateGeometryError("points are collinear or coincident")
    H = (Qj * w[:, None]).T @ Qi
    U, _, Vt = np.linalg.svd(H)
    d = np.sign(np.linalg.det(Vt.T @ U.T)) or 1.0
    R = Vt.T @ np.diag([1.0, d]) @ U.T
    t = ci - R @ cj
    return Pose2(float(t[0]), float(t[1]), math.atan2(R[1, 0], R[0, 0]))


@dataclass(frozen=True, eq=False)
class AlignmentResult:
    transform: Pose2
    pairs: tuple
    weights: np.ndarray
    residual_rms: float
    stamp: float
    age: float = 0.0

    @property
    def n_inliers(self):
        return len(self.pairs)


def distance_histograms(positions, radius=4.0, sigma=0.15, n_bins=16):
    """Per-landmark soft histogram of distances to neighbours within ``radius``.

    Each neighbour adds a Gaussian bump (width ``sigma``) centred on its
    distance, so small position noise does not flip bins.
    """
    P = np.asarray(positions, dtype=float).reshape(-1, 2)
    D = np.linalg.norm(P[:, None] - P[None], axis=-1)
    centres = (np.arange(n_bins) + 0.5) * radius / n_bins
    W = np.exp(-0.5 * ((D[..., None] - centres) / sigma) ** 2)
    W[np.eye(len(P), dtype=bool)] = 0.0
    W[D > radius + 2.0 * sigma] = 0.0
    return W.sum(axis=1)


def histogram_similarity(hi, hj):
    """Histogram intersection normalised by the smaller mass (partial overlap friendly)."""
    inter = np.minimum(hi[:, None, :], hj[None, :, :]).sum(axis=-1)
    mass = np.minimum(hi.sum(axis=1)[:, None], hj.sum(axis=1)[None, :])
    return inter / np.maximum(mass, 1e-12)


def candidate_pairs(map_i: LocalMap, map_j: LocalMap, max_trace=0.5, max_candidates=200,
                    radius=4.0, sigma=0.15, n_bins=16):
    """Cross pairs of settled landmarks, trimmed by distance-histogram similarity.

    Pairs are ranked by the better of their row and column rank, so every
    landmark keeps its best few partners instead of the densest
    neighbourhoods taking the whole budget; similarity breaks ties.
    """
    li = [lm for lm in map_i if np.trace(lm.covariance) <= max_trace]
    lj = [lm for lm in map_j if np.trace(lm.covariance) <= max_trace]
    pairs = [(a.id, b.id) for a in li for b in lj]
    if len(pairs) <= max_candidates:
        return pairs
    hi = distance_histograms([lm.position for lm in li], radius, sigma, n_bins)
    hj = distance_histograms([lm.position for lm in lj], radius, sigma, n_bins)
    S = histogram_similarity(hi, hj)
    row_rank = np.argsort(np.argsort(-S, axis=1, kind="stable"), axis=1, kind="stable")
    col_rank = np.argsort(np.argsort(-S, axis=0, kind="stable"), axis=0, kind="stable")
    rank = np.minimum(row_rank, col_rank).ravel()
    order = np.lexsort((-S.ravel(), rank))
    keep = np.sort(order[:max_candidates])
    return [pairs[k] for k in keep]


def align(map_i: LocalMap, map_j: LocalMap, now, eps_c=0.3, max_trace=0.5, max_candidates=200,
          frame_period=0.2, min_inliers=MIN_INLIERS, max_residual=math.inf):
    """Transform from frame ``j`` to frame ``i``.

    Raises ``InsufficientOverlapError`` when fewer than ``min_inliers`` pairs
    agree or when the fitted RMS residual exceeds ``max_residual`` (pairwise
    distances also agree for mirror-image configurations).
    """
    if len(map_i) == 0 or len(map_j) == 0:
        raise InsufficientOverlapError("both maps need landmarks")
    pos_i = {lm.id: lm.position for lm in map_i}
    pos_j = {lm.id: lm.position for lm in map_j}
    graph = build_graph(candidate_pairs(map_i, map_j, max_trace, max_candidates), pos_i, pos_j,
                        eps_c)
    chosen = max_consistent_set(graph)
    if len(chosen) < max(min_inliers, MIN_INLIERS):
        raise InsufficientOverlapError(f"only {len(chosen)} consistent pairs")
    pairs = tuple(graph.candidates[k] for k in chosen)
    age_i = np.array([now - map_i.landmarks[a].last_seen for a, _ in pairs])
    age_j = np.array([now - map_j.landmarks[b].last_seen for _, b in pairs])
    w = recency_weights(age_i, age_j, frame_period)
    Pi = np.array([pos_i[a] for a, _ in pairs])
    Pj = np.array([pos_j[b] for _, b in pairs])
    X = weighted_arun(Pj, Pi, w)
    res = X.apply(Pj) - Pi
    rms = float(np.sqrt(np.mean(np.sum(res ** 2, axis=1))))
    if rms > max_residual:
        raise InsufficientOverlapError(f"consistent set does not fit rigidly (rms {rms:.3g} m)")
    return AlignmentResult(X, pairs, w, rms, float(now))


def apply_alignment(traj: SplineTrajectory, X: Pose2):
    """Re-express ``traj`` through ``X``: planar rotation plus translation, yaw offset."""
    ctrl = np.array(traj.pos_ctrl, dtype=float)
    ctrl[:, :2] = ctrl[:, :2] @ rot2(X.yaw).T + X.translation
    return SplineTrajectory(ctrl, np.asarray(traj.yaw_ctrl) + X.yaw, traj.t_in, traj.T)


class FrameAligner(BaseEstimator):
    """Keeps the latest alignment to one peer; failures leave the old estimate in place."""

    def __init__(self, eps_c=0.3, max_trace=0.5, max_candidates=200, frame_period=0.2,
                 min_inliers=MIN_INLIERS, max_residual=math.inf):
        self.eps_c = eps_c
        self.max_trace = max_trace
        self.max_candidates = max_candidates
        self.frame_period = frame_period
        self.min_inliers = min_inliers
        self.max_residual = max_residual

    def fit(self, map_i, map_j, now=0.0):
        if not hasattr(self, "result_"):
            self.result_ = AlignmentResult(Pose2.identity(), (), np.zeros(0), float("nan"),
                                           float(now), age=math.inf)
        try:
            self.result_ = align(map_i, map_j, now, self.eps_c, self.max_trace,
                                 self.max_candidates, self.frame_period, self.min_inliers,
                                 self.max_residual)
            self.succeeded_ = True
        except (InsufficientOverlapError, DegenerateGeometryError):
            r = self.result_
            self.result_ = AlignmentResult(r.transform, r.pairs, r.weights, r.residual_rms,
                                           r.stamp, age=now - r.stamp)
            self.succeeded_ = False
        self.transform_ = self.result_.transform
        return self

    def transform(self, X):
        """Map ``(n, 2)`` points from the peer's frame into ours."""
        return self.transform_.apply(check_points(X, 2, "X"))


@dataclass
class AlignmentLog:
    rows: list = field(default_factory=list)
    columns = ("time", "peer", "tx", "ty", "yaw", "residual", "inliers")

    def record(self, time, peer, result: AlignmentResult):
        X = result.transform
        self.rows.append((float(time), int(peer), X.x, X.y, X.yaw, result.residual_rms,
                          result.n_inliers))

    def write_csv(self, path):
        with open(path, "w", newline="") as f:
            wr = csv.writer(f)
            wr.writerow(self.columns)
            for r in self.rows:
                wr.writerow([f"{v:.9g}" if isinstance(v, float) else v for v in r])
