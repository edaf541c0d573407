"""Deterministic discrete-event simulation of mapping, alignment, planning and deconfliction."""

from __future__ import annotations

import bisect
import heapq
import math
import time
from dataclasses import dataclass, field

import numpy as np

from ..alignment import AlignmentLog, FrameAligner
from ..deconfliction import MessageBus, ProtocolAgent, ProtocolConfig, peer_trajectory
from ..geometry import FORWARD_CAMERA, Pose3
from ..mapping import DEFAULT_INTRINSICS, LandmarkMapper, LocalMap, SyntheticDetector, detect, tilted_camera
from ..planner import (InitialState, Obstacle, PeerTrajectory, PlannerConfig, PlanningProblem,
                       in_fov, solve, visibility_stats)
from ..trajectory import SplineTrajectory
from ..uncertainty import FovModel, ObstacleBelief
from .metrics import Metrics, alignment_error_stats, alignment_errors, count_collisions
from .scenario import PlannerMotion, Scenario
from .world import drift_transform, lift, make_landmarks, scripted_pose, trefoil_positions, trefoil_state

# tie-break order for simultaneous events
_PRIORITY = {"deliver": 0, "deadline": 1, "map": 2, "frame": 3, "epoch": 4, "replan": 5}
PLANNER_FOV = FovModel()
UNKNOWN_LOOKAHEAD = 1.0


class EventQueue:
    """Min-heap of ``(time, priority, seq)``; refuses events scheduled in the past."""

    def __init__(self):
        self._heap = []
        self._seq = 0
        self.now = 0.0

    def push(self, t, kind, agent, payload=None):
        if t < self.now - 1e-12:
            raise ValueError(f"event {kind} at {t} is earlier than now={self.now}")
        heapq.heappush(self._heap, (float(t), _PRIORITY[kind], self._seq, kind, agent, payload))
        self._seq += 1

    def pop(self):
        t, _, _, kind, agent, payload = heapq.heappop(self._heap)
        self.now = t
        return t, kind, agent, payload

    def __len__(self):
        return len(self._heap)


@dataclass
class RunResult:
    scenario: Scenario
    metrics: Metrics
    events: list
    alignment_log: AlignmentLog
    error_series: np.ndarray
    truth_paths: dict
    sample_times: np.ndarray
    timing: dict = field(default_factory=dict)


class _Agent:
    def __init__(self, spec, sc: Scenario, detector, seed):
        self.spec = spec
        self.id = spec.id
        self.motion = spec.motion
        self.planner = isinstance(spec.motion, PlannerMotion)
        self.frame_offset = spec.clock_offset / sc.frame_rate
        self.mapper = LandmarkMapper(DEFAULT_INTRINSICS, sc.mapping.sigma_t, sc.mapping.stretch,
                                     sc.mapping.gate, sc.mapping.kappa, owner=spec.id,
                                     process_noise=sc.mapping.process_noise)
        self.aligners = {}
        self.ever_aligned = set()
        self.rng_detect = np.random.default_rng([seed, 1, spec.id])
        self.rng_backoff = np.random.default_rng([seed, 3, spec.id])
        self.detector = detector
        self.protocol = None
        self.done = False
        self.arrival = math.nan
        self.plan_seconds = []
        self._t_starts = []
        if self.planner:
            m = self.motion
            self.goal = lift(drift_transform(spec.drift, 0.0)).apply(np.asarray(m.goal))
            self.goal_yaw = math.radians(m.goal_yaw_deg) + drift_transform(spec.drift, 0.0).yaw

    def drift(self, t):
        return drift_transform(self.spec.drift, t)

    def active(self, t):
        commits = self.protocol.commits
        k = bisect.bisect_right(self._t_starts, t + 1e-12) - 1
        return commits[max(k, 0)].trajectory

    def note_commit(self):
        self._t_starts = [m.trajectory.t_in for m in self.protocol.commits]

    def local_pose(self, t) -> Pose3:
        if self.planner:
            traj = self.active(t)
            p = traj.position(t, hold=True)
            return Pose3.from_xyz_yaw(p[0], p[1], p[2], float(traj.yaw(t, hold=True)))
        return lift(self.drift(t)).compose(self.truth_pose(t))

    def truth_pose(self, t) -> Pose3:
        if self.planner:
            return lift(self.drift(t)).inverse().compose(self.local_pose(t))
        p, yaw = scripted_pose(self.motion, t)
        return Pose3.from_xyz_yaw(p[0], p[1], p[2], yaw)


class Simulation:
    def __init__(self, scenario: Scenario):
        sc = scenario
        self.sc = sc
        self.objects = make_landmarks(sc.landmarks, np.random.default_rng([sc.seed, 0]))
        d = sc.detector
        self.detector = SyntheticDetector(
            mount=tilted_camera(math.radians(d.pitch_deg)), intrinsics=DEFAULT_INTRINSICS,
            fov_angle=math.radians(d.fov_deg), pixel_sigma=d.pixel_sigma,
            detection_probability=d.detection_probability, min_size_px=d.min_size_px,
            max_size_px=d.max_size_px, max_range=d.max_range)
        self.agents = {a.id: _Agent(a, sc, self.detector, sc.seed) for a in sc.agents}
        self.order = [a.id for a in sc.agents]
        self.rng_delay = np.random.default_rng([sc.seed, 2])
        self.queue = EventQueue()
        self.events = []
        self.alignment_log = AlignmentLog()
        self.estimates = []
        self.planners = [a for a in self.agents.values() if a.planner]
        radius = max(a.radius for a in sc.agents)
        self.protocol_config = ProtocolConfig(
            delay_check_duration=sc.protocol.delay_check, agent_radius=radius,
            check_dt=sc.protocol.check_dt, margin=sc.protocol.margin, max_delay=sc.delay.high,
            hold_final=True)
        self.bus = MessageBus([a.id for a in self.planners], self._delay)

    def _delay(self):
        return float(self.rng_delay.uniform(self.sc.delay.low, self.sc.delay.high))

    def log(self, t, kind, **fields):
        rec = {"t": round(float(t), 9), "event": kind}
        for k, v in fields.items():
            rec[k] = round(float(v), 9) if isinstance(v, (float, np.floating)) else v
        self.events.append(rec)

    # -- setup ------------------------------------------------------------------------
    def _bootstrap(self):
        sc = self.sc
        frame_dt = 1.0 / sc.frame_rate
        for a in self.agents.values():
            self.queue.push(a.frame_offset, "frame", a.id)
            if sc.alignment.enabled and len(self.agents) > 1:
                self.queue.push(a.frame_offset + sc.alignment_period, "epoch", a.id)
        for a in self.planners:
            a.protocol = ProtocolAgent(a.id, self.protocol_config)
        for a in self.planners:
            m = a.motion
            local0 = lift(a.drift(0.0)).compose(
                Pose3.from_xyz_yaw(*m.start, math.radians(m.start_yaw_deg)))
            hover = SplineTrajectory.stationary(local0.translation, local0.yaw, 0.0,
                                                max(sc.planner.start_delay, frame_dt))
            for msg in a.protocol.bootstrap(hover, 0.0):
                for b in self.planners:
                    if b is not a:
                        b.protocol.store.ingest(msg, 0.0)
            a.note_commit()
            self.queue.push(sc.planner.start_delay + a.frame_offset, "replan", a.id)

    # -- handlers ---------------------------------------------------------------------
    def _on_frame(self, t, a: _Agent):
        dets = detect(self.objects, a.truth_pose(t), self.detector, a.rng_detect, t)
        cam = a.local_pose(t).compose(self.detector.mount)
        a.mapper.partial_fit(dets, cam, t)
        self.log(t, "frame", agent=a.id, detections=len(dets), landmarks=len(a.mapper.map_))
        nxt = t + 1.0 / self.sc.frame_rate
        if nxt <= self.sc.duration:
            self.queue.push(nxt, "frame", a.id)

    def _on_epoch(self, t, a: _Agent):
        if hasattr(a.mapper, "map_"):
            snap = a.mapper.map_.to_dict()
            for b in self.order:
                if b != a.id:
                    self.queue.push(t + self._delay(), "map", b, (a.id, snap))
            self.log(t, "map_sent", agent=a.id, landmarks=len(snap["landmarks"]))
        nxt = t + self.sc.alignment_period
        if nxt <= self.sc.duration:
            self.queue.push(nxt, "epoch", a.id)

    def _on_map(self, t, a: _Agent, payload):
        sender, snap = payload
        if not hasattr(a.mapper, "map_"):
            return
        al = self.sc.alignment
        aligner = a.aligners.setdefault(sender, FrameAligner(
            al.eps_c, al.max_trace, al.max_candidates, 1.0 / self.sc.frame_rate, al.min_inliers,
            al.max_residual))
        aligner.fit(a.mapper.map_, LocalMap.from_dict(snap), t)
        res = aligner.result_
        if aligner.succeeded_:
            a.ever_aligned.add(sender)
            if a.protocol is not None:
                a.protocol.peer_transforms[sender] = res.transform
        X = res.transform
        self.log(t, "align", agent=a.id, peer=sender, ok=bool(aligner.succeeded_), tx=X.x,
                 ty=X.y, yaw=X.yaw, inliers=res.n_inliers,
                 residual=res.residual_rms if math.isfinite(res.residual_rms) else None)
        if sender not in a.ever_aligned:
            return
        if a.id == self.order[0]:
            self.alignment_log.record(t, sender, res)
            if len(self.order) > 1 and sender == self.order[1]:
                truth = a.drift(t).compose(self.agents[sender].drift(t).inverse())
                self.estimates.append((t, X, truth))

    def _planner_config(self, a: _Agent):
        p = self.sc.planner
        # the protocol's sampled check also demands (v_a + v_b) * dt / 2 of slack
        slack = self.sc.protocol.check_dt * p.v_limit
        return PlannerConfig(n_starts=p.n_starts, agent_radius=a.spec.radius,
                             use_motion_uncertainty=p.use_motion_uncertainty, v_cap=p.v_cap,
                             v_limit=p.v_limit, horizon_radius=p.horizon_radius,
                             peer_margin=p.peer_margin + slack, fov=PLANNER_FOV)

    def _obstacles(self, a: _Agent, t, t_in):
        out = []
        L = lift(a.drift(t))
        R = L.rotation
        for spec in self.sc.obstacles:
            p, v, acc = trefoil_state(t, spec)
            h = t_in - t
            p, v = p + v * h + 0.5 * acc * h * h, v + acc * h
            mean = np.concatenate([L.apply(p), R @ v, R @ acc])
            cov = np.diag([spec.position_sigma ** 2] * 3 + [spec.velocity_sigma ** 2] * 3
                          + [spec.acceleration_sigma ** 2] * 3)
            out.append(Obstacle(ObstacleBelief(mean, cov), np.full(3, spec.half_extent)))
        return out

    def _peers(self, a: _Agent):
        radii = {s.id: s.radius for s in self.sc.agents}
        msgs = sorted(a.protocol.store.messages(), key=lambda m: (m.sender, m.seq))
        return [PeerTrajectory(peer_trajectory(m, a.protocol.peer_transforms), radii[m.sender],
                               m.sender) for m in msgs]

    def _broadcast(self, t, msgs):
        for m in msgs:
            self.log(t, "publish", agent=m.sender, status=m.status.value, seq=m.seq,
                     t_in=m.trajectory.t_in, T=m.trajectory.T)
            for t_arr, r, msg in self.bus.broadcast(m, t):
                self.queue.push(t_arr, "deliver", r, msg)

    def _backoff(self, a: _Agent, t):
        self.queue.push(t + float(a.rng_backoff.uniform(0.0, 0.2)), "replan", a.id)

    def _on_replan(self, t, a: _Agent):
        if a.done or a.protocol.pending is not None:
            return
        sc = self.sc
        t_in = t + sc.protocol.delay_check
        cur = a.active(t_in)
        init = InitialState.from_trajectory(cur, t_in)
        if (np.linalg.norm(init.position - a.goal) <= sc.planner.goal_reached
                and t_in >= cur.T):
            self._finish(a, cur)
            return
        problem = PlanningProblem(init, a.goal, a.goal_yaw, self._obstacles(a, t, t_in),
                                  self._peers(a), self._planner_config(a))
        w0 = time.perf_counter()
        res = solve(problem)
        a.plan_seconds.append(time.perf_counter() - w0)
        if not res:
            self.log(t, "plan", agent=a.id, feasible=False)
            self.queue.push(t + 0.5 * sc.planner.replan_period, "replan", a.id)
            return
        self.log(t, "plan", agent=a.id, feasible=True, cost=res.cost, T=res.trajectory.T)
        out = a.protocol.propose(res.trajectory, t)
        if out is None:
            self.log(t, "check_failed", agent=a.id)
            self._backoff(a, t)
            return
        self._broadcast(t, out)
        self.queue.push(a.protocol.pending.deadline, "deadline", a.id)

    def _finish(self, a: _Agent, traj):
        a.done = True
        a.arrival = traj.T
        self.log(self.queue.now, "arrived", agent=a.id, arrival=traj.T)

    def _on_deadline(self, t, a: _Agent):
        out = a.protocol.finish(t)
        if not out:
            return
        a.note_commit()
        self._broadcast(t, out)
        self.log(t, "commit", agent=a.id, seq=out[0].seq)
        traj = a.protocol.committed.trajectory
        at_goal = np.linalg.norm(traj.position(traj.T) - a.goal) <= self.sc.planner.goal_reached
        if at_goal and not self.sc.obstacles:
            self._finish(a, traj)
            return
        nxt = t + self.sc.planner.replan_period - self.sc.protocol.delay_check
        self.queue.push(max(nxt, t), "replan", a.id)

    def _on_deliver(self, t, a: _Agent, msg):
        pending = a.protocol.pending is not None
        out = a.protocol.receive(msg, t)
        if pending and a.protocol.pending is None:
            self.log(t, "abort", agent=a.id, by=msg.sender)
            self._broadcast(t, out)
            self._backoff(a, t)

    # -- main loop --------------------------------------------------------------------
    def run(self) -> RunResult:
        wall0 = time.perf_counter()
        self._bootstrap()
        handlers = {"frame": self._on_frame, "epoch": self._on_epoch,
                    "replan": self._on_replan, "deadline": self._on_deadline}
        while self.queue:
            t, kind, aid, payload = self.queue.pop()
            if t > self.sc.duration:
                break
            a = self.agents[aid]
            if kind == "map":
                self._on_map(t, a, payload)
            elif kind == "deliver":
                self._on_deliver(t, a, payload)
            else:
                handlers[kind](t, a)
        metrics, paths, grid = self._metrics()
        timing = {"wall_seconds": time.perf_counter() - wall0,
                  "plan_ms": [1e3 * s for a in self.planners for s in a.plan_seconds]}
        series = np.array([[t, *alignment_errors([X], [tr])[0]] for t, X, tr in self.estimates])
        return RunResult(self.sc, metrics, self.events, self.alignment_log,
                         series.reshape(-1, 4), paths, grid, timing)

    # -- metrics ----------------------------------------------------------------------
    def _truth_path(self, a: _Agent, grid):
        P = np.empty((len(grid), 3))
        Y = np.empty(len(grid))
        for k, t in enumerate(grid):
            pose = a.truth_pose(t)
            P[k] = pose.translation
            Y[k] = pose.yaw
        return P, Y

    def _metrics(self):
        sc = self.sc
        grid = np.arange(0.0, sc.duration + 1e-9, sc.sample_dt)
        paths, yaws = {}, {}
        for aid in self.order:
            paths[aid], yaws[aid] = self._truth_path(self.agents[aid], grid)
        obstacle_paths = [trefoil_positions(grid, o) for o in sc.obstacles]
        radii = {s.id: s.radius for s in sc.agents}
        collisions, _ = count_collisions(paths, radii, obstacle_paths,
                                         [np.full(3, o.half_extent) for o in sc.obstacles])
        m = Metrics(collisions=collisions)
        if self.estimates:
            stats = alignment_error_stats([e[1] for e in self.estimates],
                                          [e[2] for e in self.estimates])
            for k, v in stats.items():
                setattr(m, k, v)
            m.n_align_epochs = len(self.estimates)
        if self.planners:
            arrivals = [a.arrival - sc.planner.start_delay for a in self.planners]
            m.travel_time = float(np.mean(arrivals))
            m.n_commits = sum(len(a.protocol.commits) - 1 for a in self.planners)
            m.n_aborts = sum(a.protocol.aborted for a in self.planners)
            self._fov_metrics(m, grid, paths, yaws, obstacle_paths)
        return m, paths, grid

    def _fov_metrics(self, m: Metrics, grid, paths, yaws, obstacle_paths):
        sc = self.sc
        dt = sc.sample_dt
        lag = int(round(UNKNOWN_LOOKAHEAD / dt))
        known, unknown = [], []
        for a in self.planners:
            end = a.arrival if math.isfinite(a.arrival) else sc.duration
            sel = np.nonzero((grid >= sc.planner.start_delay) & (grid <= end))[0]
            if sel.size == 0:
                continue
            P, Y = paths[a.id], yaws[a.id]
            for op in obstacle_paths:
                known.append(visibility_stats(in_fov(op[sel], P[sel], Y[sel], PLANNER_FOV,
                                                     FORWARD_CAMERA), dt))
            ahead_idx = np.minimum(sel + lag, len(grid) - 1)
            moving = np.linalg.norm(P[ahead_idx] - P[sel], axis=1) > 1e-3
            s = sel[moving]
            unknown.append(visibility_stats(in_fov(P[ahead_idx[moving]], P[s], Y[s], PLANNER_FOV,
                                                   FORWARD_CAMERA), dt))
        if known:
            m.known_fov_rate = float(np.mean([k[0] for k in known]))
            m.known_continuous = float(max(k[1] for k in known))
        if unknown:
            m.unknown_fov_rate = float(np.mean([u[0] for u in unknown]))
            m.unknown_continuous = float(max(u[1] for u in unknown))


def run(scenario: Scenario) -> RunResult:
    """Run ``scenario`` to completion; identical inputs give identical results."""
    return Simulation(scenario).run()
