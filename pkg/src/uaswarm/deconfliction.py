"""Asynchronous two-step trajectory publication with a delay check.

An agent first checks a candidate against every peer trajectory it has
stored, broadcasts it as ``OPTIMISTIC``, keeps listening for
``delay_check_duration`` seconds and, if nothing that arrived in the window
conflicts, broadcasts it again as ``COMMITTED``.  A failed window is
answered by re-sending the previous committed trajectory under a fresh
sequence number, which withdraws the optimistic one at every peer.
"""

from __future__ import annotations

import enum
import heapq
import json
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .alignment import apply_alignment
from .trajectory import SplineTrajectory


class Status(str, enum.Enum):
    OPTIMISTIC = "optimistic"
    COMMITTED = "committed"


@dataclass(frozen=True, eq=False)
class TrajectoryMessage:
    sender: int
    trajectory: SplineTrajectory
    status: Status
    stamp: float
    seq: int

    def to_json(self):
        return json.dumps({"sender": self.sender, "status": self.status.value,
                           "stamp": self.stamp, "seq": self.seq,
                           "trajectory": self.trajectory.to_dict()})

    @classmethod
    def from_json(cls, s):
        d = json.loads(s)
        return cls(int(d["sender"]), SplineTrajectory.from_dict(d["trajectory"]),
                   Status(d["status"]), float(d["stamp"]), int(d["seq"]))


@dataclass(frozen=True)
class ProtocolConfig:
    """``max_delay`` is the known bound on message latency.

    The id tie-break (the higher id ignores a conflicting optimistic
    trajectory from a lower id, which is bound to yield) is only safe when
    the window covers two message delays, so it is enabled only then.
    """

    delay_check_duration: float = 0.3
    agent_radius: float = 0.3
    check_dt: float = 0.05
    margin: float = 0.0
    max_delay: float = 0.3
    hold_final: bool = False

    def __post_init__(self):
        if self.delay_check_duration < 0:
            raise ValueError("delay_check_duration must be >= 0")
        if self.check_dt <= 0 or self.agent_radius < 0 or self.margin < 0 or self.max_delay < 0:
            raise ValueError("invalid protocol configuration")

    @property
    def tie_break(self):
        return self.delay_check_duration >= 2.0 * self.max_delay


def _speed_bound(traj: SplineTrajectory):
    # velocity control points bound the speed (convex hull, norm is convex)
    return float(np.max(np.linalg.norm(traj.control_points(1), axis=1)))


def collision_check(a: SplineTrajectory, b: SplineTrajectory, radii, dt, hold_final=False):
    """``True`` when the two trajectories stay more than ``r_a + r_b`` apart.

    Distances are sampled every ``dt`` over the common time domain; each
    sample must clear the radii plus ``(v_a + v_b) dt / 2`` so nothing can
    be missed between samples.  With ``hold_final`` each trajectory is
    extended by hovering at its final point.
    """
    ra, rb = radii
    if dt <= 0:
        raise ValueError("dt must be positive")
    t0 = max(a.t_in, b.t_in)
    t1 = max(a.T, b.T) if hold_final else min(a.T, b.T)
    if t1 < t0:
        return True
    n = max(2, int(math.ceil((t1 - t0) / dt)) + 1)
    t = np.linspace(t0, t1, n)
    step = (t1 - t0) / (n - 1) if n > 1 else 0.0
    d = np.linalg.norm(a.position(t, hold=True) - b.position(t, hold=True), axis=1)
    slack = 0.5 * step * (_speed_bound(a) + _speed_bound(b))
    return bool(np.min(d) - slack > ra + rb)


class TrajectoryStore:
    """Latest optimistic and committed trajectory per peer.

    Sequence numbers only move forward per (peer, status); a committed
    entry also withdraws any optimistic entry with a lower number.
    """

    def __init__(self, owner=None):
        self.owner = owner
        self._entries = {}

    def ingest(self, msg: TrajectoryMessage, now=None):
        if msg.sender == self.owner:
            return False
        slots = self._entries.setdefault(msg.sender, {})
        cur = slots.get(msg.status)
        if cur is not None and cur[0].seq >= msg.seq:
            return False
        if msg.status is Status.OPTIMISTIC:
            com = slots.get(Status.COMMITTED)
            if com is not None and com[0].seq > msg.seq:
                return False
        else:
            opt = slots.get(Status.OPTIMISTIC)
            if opt is not None and opt[0].seq < msg.seq:
                del slots[Status.OPTIMISTIC]
        slots[msg.status] = (msg, msg.stamp if now is None else now)
        return True

    def get(self, peer, status):
        e = self._entries.get(peer, {}).get(Status(status))
        return None if e is None else e[0]

    def messages(self):
        return [e[0] for slots in self._entries.values() for e in slots.values()]

    def peers(self):
        return sorted(self._entries)

    def __len__(self):
        return sum(len(s) for s in self._entries.values())


def peer_trajectory(msg: TrajectoryMessage, transforms=None):
    """The message's trajectory, re-expressed through ``transforms[sender]`` if given."""
    X = None if transforms is None else transforms.get(msg.sender)
    return msg.trajectory if X is None else apply_alignment(msg.trajectory, X)


def check(candidate: SplineTrajectory, store: TrajectoryStore, config: ProtocolConfig,
          transforms=None):
    """``transforms`` maps a peer id to the Pose2 taking its frame into ours."""
    r = config.agent_radius + 0.5 * config.margin
    return all(collision_check(candidate, peer_trajectory(m, transforms), (r, r),
                               config.check_dt, config.hold_final)
               for m in store.messages())


def delay_check(candidate: SplineTrajectory, store: TrajectoryStore, config: ProtocolConfig,
                message_feed, start=0.0):
    """Ingest ``(arrival_time, message)`` pairs inside the window and re-check.

    Messages arriving after ``start + delay_check_duration`` are left for
    later.  Returns ``False`` on the first conflicting arrival.
    """
    end = start + config.delay_check_duration
    r = config.agent_radius + 0.5 * config.margin
    ok = True
    for t, msg in sorted(message_feed, key=lambda p: p[0]):
        if t > end:
            break
        store.ingest(msg, t)
        if ok and not collision_check(candidate, msg.trajectory, (r, r), config.check_dt,
                                      config.hold_final):
            ok = False
    return ok


@dataclass
class _Pending:
    message: TrajectoryMessage
    deadline: float


class ProtocolAgent:
    """One agent's side of the protocol as an event-driven state machine.

    ``propose`` -> broadcast the returned messages; deliver peers' messages
    through ``receive``; call ``finish`` when the window deadline passes.
    """

    def __init__(self, agent_id, config: ProtocolConfig):
        self.id = agent_id
        self.config = config
        self.store = TrajectoryStore(agent_id)
        self.seq = 0
        self.committed = None
        self.pending = None
        self.commits = []
        self.aborted = 0
        # peer id -> Pose2 into this agent's frame; kept current by the owner
        self.peer_transforms = {}

    def _message(self, traj, status, now):
        self.seq += 1
        return TrajectoryMessage(self.id, traj, status, float(now), self.seq)

    def bootstrap(self, traj: SplineTrajectory, now=0.0):
        msg = self._message(traj, Status.COMMITTED, now)
        self.committed = msg
        self.commits.append(msg)
        return [msg]

    def propose(self, candidate: SplineTrajectory, now):
        """Optimistic publication, or ``None`` when the candidate already fails the check."""
        if self.pending is not None:
            raise RuntimeError("a proposal is already in its delay window")
        if not check(candidate, self.store, self.config, self.peer_transforms):
            return None
        msg = self._message(candidate, Status.OPTIMISTIC, now)
        self.pending = _Pending(msg, now + self.config.delay_check_duration)
        return [msg]

    def _conflicts(self, msg: TrajectoryMessage):
        r = self.config.agent_radius + 0.5 * self.config.margin
        return not collision_check(self.pending.message.trajectory,
                                   peer_trajectory(msg, self.peer_transforms), (r, r),
                                   self.config.check_dt, self.config.hold_final)

    def receive(self, msg: TrajectoryMessage, now):
        """Store ``msg``; returns the retraction to broadcast if it vetoes our proposal."""
        fresh = self.store.ingest(msg, now)
        if self.pending is None or not fresh or not self._conflicts(msg):
            return []
        if (self.config.tie_break and msg.status is Status.OPTIMISTIC and msg.sender < self.id):
            return []
        self.pending = None
        self.aborted += 1
        if self.committed is None:
            return []
        return [self._message(self.committed.trajectory, Status.COMMITTED, now)]

    def finish(self, now):
        """Commit the pending proposal if its window closed without a veto."""
        if self.pending is None or now + 1e-12 < self.pending.deadline:
            return []
        msg = self._message(self.pending.message.trajectory, Status.COMMITTED, now)
        self.pending = None
        self.committed = msg
        self.commits.append(msg)
        return [msg]


class MessageBus:
    """Broadcast with independently sampled per-recipient delays; keeps a log."""

    def __init__(self, agent_ids, delay_sampler=None):
        self.agent_ids = list(agent_ids)
        self.delay_sampler = delay_sampler or (lambda: 0.0)
        self.log = []

    def broadcast(self, msg: TrajectoryMessage, now):
        self.log.append((now, msg))
        return [(now + float(self.delay_sampler()), r, msg)
                for r in self.agent_ids if r != msg.sender]


def publish_two_step(agent: ProtocolAgent, candidate: SplineTrajectory, bus: MessageBus, now,
                     message_feed=()):
    """Scripted run of one publication: propose, deliver the feed, then commit or retract.

    ``message_feed`` holds ``(arrival_time, message)`` pairs addressed to
    ``agent``.  Returns ``True`` if the candidate was committed.
    """
    out = agent.propose(candidate, now)
    if out is None:
        return False
    for m in out:
        bus.broadcast(m, now)
    deadline = agent.pending.deadline
    for t, msg in sorted(message_feed, key=lambda p: p[0]):
        if t > deadline:
            break
        for m in agent.receive(msg, t):
            bus.broadcast(m, t)
        if agent.pending is None:
            return False
    for m in agent.finish(deadline):
        bus.broadcast(m, deadline)
    return agent.committed is not None and agent.committed.trajectory is candidate


def executed_position(commits, t):
    """Position under the latest commit whose trajectory has started by ``t``."""
    active = None
    for msg in commits:
        if msg.trajectory.t_in <= t + 1e-12:
            active = msg
    if active is None:
        active = commits[0]
    return active.trajectory.position(t, hold=True)


def executed_conflicts(commit_logs, radius, t_end, dt=0.01):
    """Independent oracle: dense resampling of what every agent actually flies."""
    ids = sorted(commit_logs)
    t = np.arange(0.0, t_end + 1e-12, dt)
    paths = {}
    for i in ids:
        log = sorted(commit_logs[i], key=lambda m: (m.trajectory.t_in, m.seq))
        starts = np.array([m.trajectory.t_in for m in log])
        which = np.searchsorted(starts, t + 1e-12, side="right") - 1
        which = np.maximum(which, 0)
        pos = np.empty((len(t), 3))
        for k in np.unique(which):
            sel = which == k
            pos[sel] = log[k].trajectory.position(t[sel], hold=True)
        paths[i] = pos
    bad = []
    for a_idx, a in enumerate(ids):
        for b in ids[a_idx + 1:]:
            d = np.linalg.norm(paths[a] - paths[b], axis=1)
            if np.min(d) <= 2 * radius:
                bad.append((a, b, float(t[np.argmin(d)]), float(np.min(d))))
    return bad


@dataclass
class RandomRunResult:
    commits: dict
    conflicts: list
    n_aborted: int
    n_committed: int
    n_messages: int
    stalled: list = field(default_factory=list)


def _straight(p0, p1, speed, t0, n_intervals=3):
    dist = float(np.linalg.norm(p1 - p0))
    D = max(dist / speed, 0.5)
    # uniform control points on a clamped cubic give a smooth start/stop-free line;
    # repeat the ends for zero end velocity
    n = n_intervals + 3
    s = np.concatenate([[0, 0], np.linspace(0, 1, n - 4), [1, 1]])
    ctrl = p0 + s[:, None] * (p1 - p0)
    return SplineTrajectory(ctrl, np.zeros(n - 1), t0, t0 + D)


def run_random_protocol(n_agents, seed, config: ProtocolConfig, duration=20.0, arena=6.0,
                        speed=1.5, replan_period=1.0, max_delay=0.3):
    """Agents repeatedly propose random straight moves inside a small arena.

    Messages get delays uniform in ``[0, max_delay]`` and each agent runs on
    its own phase offset.  Returns every commit plus the oracle's conflicts.
    """
    # agents hover once a trajectory ends, so checks must cover that too
    config = replace(config, hold_final=True)
    rng = np.random.default_rng(seed)
    agents = {i: ProtocolAgent(i, config) for i in range(n_agents)}
    bus = MessageBus(list(agents), lambda: rng.uniform(0.0, max_delay))
    heap = []
    order = 0

    def push(t, kind, who, payload=None):
        nonlocal order
        heapq.heappush(heap, (t, order, kind, who, payload))
        order += 1

    # start positions on a ring, spaced well apart
    ang = 2 * np.pi * np.arange(n_agents) / n_agents
    ring = 0.45 * arena
    for i, ag in agents.items():
        p = np.array([ring * np.cos(ang[i]), ring * np.sin(ang[i]), 1.0])
        for m in ag.bootstrap(_straight(p, p, speed, 0.0), 0.0):
            for other in agents.values():
                other.store.ingest(m, 0.0)
        push(rng.uniform(0.0, replan_period), "plan", i)

    n_msgs = 0
    while heap:
        now, _, kind, who, payload = heapq.heappop(heap)
        if now > duration:
            break
        ag = agents[who]
        out = []
        if kind == "plan":
            if ag.pending is not None:
                continue
            t_in = now + config.delay_check_duration
            here = executed_position(ag.commits, t_in)
            goal = np.append(rng.uniform(-arena / 2, arena / 2, 2), 1.0)
            out = ag.propose(_straight(here, goal, speed, t_in), now)
            if out is None:
                push(now + rng.uniform(0.0, 0.2), "plan", who)
                continue
            push(ag.pending.deadline, "deadline", who)
        elif kind == "deliver":
            was_pending = ag.pending is not None
            out = ag.receive(payload, now)
            if was_pending and ag.pending is None:
                push(now + rng.uniform(0.0, 0.2), "plan", who)
        elif kind == "deadline":
            out = ag.finish(now)
            if out:
                push(now + replan_period, "plan", who)
        for m in out:
            for t, r, msg in bus.broadcast(m, now):
                n_msgs += 1
                push(t, "deliver", r, msg)

    commits = {i: ag.commits for i, ag in agents.items()}
    conflicts = executed_conflicts(commits, config.agent_radius, duration + 10.0)
    stalled = [i for i, ag in agents.items() if len(ag.commits) < 2]
    return RandomRunResult(commits, conflicts, sum(a.aborted for a in agents.values()),
                           sum(len(a.commits) - 1 for a in agents.values()), n_msgs, stalled)
