"""End-to-end acceptance checks, one test per criterion.

Each test prints a single ``criterion N: PASS|FAIL`` line (also repeated in
the terminal summary) before asserting.
"""

import itertools
import math
import time

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES, random_spline
from uaswarm.alignment import ConsistencyGraph, build_graph, max_consistent_set, set_weight, \
    weighted_arun
from uaswarm.deconfliction import ProtocolConfig, run_random_protocol
from uaswarm.geometry import Pose2, Pose3
from uaswarm.mapping import hungarian
from uaswarm.sim import run, run_suite, write_run
from uaswarm.sim.suites import ablation_scenario, suite_cases
from uaswarm.uncertainty import (FovModel, LinearModel, ObstacleBelief, camera_frame_point,
                                 constant_acceleration_F, fov_noise_multiplier, fov_score,
                                 propagate_open_loop, propagate_step)

pytestmark = pytest.mark.acceptance


def report(n, ok, detail):
    line = f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}"
    print(line)
    ACCEPTANCE_LINES.append(line)
    assert ok, line


def random_pose(rng):
    return Pose3.from_xyz_yaw(*rng.uniform(-5, 5, 3), rng.uniform(-math.pi, math.pi))


def random_psd(rng, n, scale=1.0):
    A = rng.normal(size=(n, n))
    return scale * (A @ A.T) / n + 1e-3 * np.eye(n)


def test_criterion_1_kalman_suite():
    rng = np.random.default_rng(1)
    t0 = time.perf_counter()
    worst_eig, worst_asym, worst_trace = np.inf, 0.0, -np.inf
    for _ in range(1000):
        P = random_psd(rng, 9, rng.uniform(0.01, 10))
        mean = np.concatenate([rng.uniform(-8, 8, 3), rng.normal(size=6)])
        F = constant_acceleration_F(rng.uniform(0.01, 0.5))
        fov = FovModel(theta=rng.uniform(0.3, 3.0), r_max=random_psd(rng, 3, rng.uniform(0.1, 20)))
        b = propagate_step(ObstacleBelief(mean, P), LinearModel(F), random_pose(rng), fov)
        C = b.covariance
        worst_asym = max(worst_asym, float(np.max(np.abs(C - C.T))))
        worst_eig = min(worst_eig, float(np.linalg.eigvalsh(C)[0]))
        worst_trace = max(worst_trace, float(np.trace(C) - np.trace(F @ P @ F.T)))
    # open-loop limit: a huge noise ceiling makes the update vanish
    worst_rel = 0.0
    for _ in range(200):
        P = random_psd(rng, 9)
        F = constant_acceleration_F(rng.uniform(0.01, 0.5))
        mean = np.concatenate([rng.uniform(-8, 8, 3), np.zeros(6)])
        fov = FovModel(r_max=1e16 * np.eye(3))
        C = propagate_step(ObstacleBelief(mean, P), LinearModel(F), random_pose(rng), fov).covariance
        ref = propagate_open_loop(P, F)
        worst_rel = max(worst_rel, float(np.linalg.norm(C - ref) / np.linalg.norm(ref)))
    dt = time.perf_counter() - t0
    ok = (worst_asym < 1e-9 and worst_eig > -1e-9 and worst_trace <= 1e-9 and worst_rel < 1e-6
          and dt < 5.0)
    report(1, ok, f"min eig {worst_eig:.2e}, max trace change {worst_trace:.2e}, "
                  f"open-loop rel err {worst_rel:.1e}, {dt:.2f} s")


def test_criterion_2_fov_suite():
    t0 = time.perf_counter()
    eps = 1e-6
    fov = FovModel(theta=1.57, epsilon=eps, max_multiplier=1e12)
    boundary = fov_noise_multiplier(0.0, fov)[0]
    c = math.cos(0.5 * fov.theta)
    grid = np.linspace(-1.0 - c, 1.0 - c, 1000)
    mult = np.array([fov_noise_multiplier(f, fov)[0] for f in grid])
    monotone = bool(np.all(np.diff(mult) <= 0))
    rng = np.random.default_rng(2)
    mismatches = 0
    for _ in range(10_000):
        theta = rng.uniform(0.1, 2 * math.pi - 0.1)
        p = rng.normal(size=3)
        angle = math.atan2(math.hypot(p[0], p[1]), p[2])
        inside = angle < 0.5 * theta
        mismatches += (fov_score(p, theta) > 0) != inside
    dt = time.perf_counter() - t0
    ok = abs(boundary - 1 / (1 + eps)) < 1e-15 and monotone and mismatches == 0 and dt < 1.0
    report(2, ok, f"f=0 multiplier {boundary:.9f}, monotone={monotone}, "
                  f"cone mismatches {mismatches}/10000, {dt:.2f} s")


def barycentric_inside(tet, p, tol=1e-9):
    A = np.vstack([tet.T, np.ones(4)])
    lam = np.linalg.solve(A, np.append(p, 1.0))
    return bool(np.all(lam >= -tol))


def test_criterion_3_spline_suite():
    rng = np.random.default_rng(3)
    t0 = time.perf_counter()
    worst = 0.0
    for _ in range(1000):
        traj = random_spline(rng)
        h = traj.duration / traj.n_intervals
        t = traj.t_in + h * (int(rng.integers(traj.n_intervals)) + rng.uniform(0.1, 0.9))
        e = 1e-5 * h
        for order in (1, 2, 3):
            f = (lambda s: traj.position(s)) if order == 1 else \
                (lambda s, o=order: traj.derivative(s, o - 1))
            fd = (f(t + e) - f(t - e)) / (2 * e)
            an = traj.derivative(t, order)
            # relative to the derivative's own scale on this spline
            scale = max(np.abs(traj.control_points(order)).max(), 1e-12)
            worst = max(worst, float(np.max(np.abs(fd - an))) / scale)
    outside = 0
    for _ in range(100):
        traj = random_spline(rng)
        for j in range(traj.n_intervals):
            a, b = traj.interval_bounds(j)
            tet = traj.interval_hull(j)
            outside += sum(not barycentric_inside(tet, p)
                           for p in traj.position(np.linspace(a, b, 10)))
    dt = time.perf_counter() - t0
    ok = worst < 1e-5 and outside == 0 and dt < 5.0
    report(3, ok, f"worst derivative rel err {worst:.1e}, hull escapes {outside}, {dt:.2f} s")


def brute_assignment(C):
    n = len(C)
    perms = np.array(list(itertools.permutations(range(n))))
    return float(C[np.arange(n), perms].sum(axis=1).min())


def brute_clique_weight(W):
    """Best summed weight over all cliques of the positive-weight graph (plain enumeration)."""
    n = len(W)
    adj = W > 0
    best = 0.0

    def extend(members, value, cand):
        nonlocal best
        best = max(best, value)
        for k, v in enumerate(cand):
            extend(members + [v], value + sum(W[v, m] for m in members),
                   [u for u in cand[k + 1:] if adj[v, u]])

    extend([], 0.0, list(range(n)))
    return best


def test_criterion_4_registration_suite():
    rng = np.random.default_rng(4)
    t0 = time.perf_counter()
    arun_err = 0.0
    for _ in range(1000):
        X = Pose2(*rng.uniform(-20, 20, 2), rng.uniform(-math.pi, math.pi))
        P = rng.uniform(-10, 10, (int(rng.integers(3, 40)), 2))
        Y = weighted_arun(P, X.apply(P), rng.uniform(0.1, 5.0, len(P)))
        arun_err = max(arun_err, abs(Y.x - X.x), abs(Y.y - X.y),
                       abs(math.remainder(Y.yaw - X.yaw, 2 * math.pi)))
    hung_bad = 0
    for _ in range(200):
        n = int(rng.integers(1, 8))
        C = rng.uniform(0, 100, (n, n))
        got = sum(C[i, j] for i, j in hungarian(C))
        hung_bad += abs(got - brute_assignment(C)) > 1e-9
    mcs_bad = 0
    for _ in range(200):
        # geometric instances: a few true pairs, random outliers, at most 12 candidates
        n_true = int(rng.integers(0, 7))
        pts = rng.uniform(-6, 6, (12, 2))
        X = Pose2(*rng.uniform(-3, 3, 2), rng.uniform(-math.pi, math.pi))
        pos_i = {k: p for k, p in enumerate(pts)}
        pos_j = {k: p + rng.normal(scale=0.05, size=2)
                 for k, p in enumerate(X.inverse().apply(pts))}
        cands = {(k, k) for k in range(n_true)}
        while len(cands) < int(rng.integers(max(n_true, 1), 13)):
            cands.add((int(rng.integers(12)), int(rng.integers(12))))
        g = build_graph(sorted(cands), pos_i, pos_j, eps_c=0.3)
        got = set_weight(g, max_consistent_set(g))
        mcs_bad += abs(got - brute_clique_weight(g.weights)) > 1e-9
    dt = time.perf_counter() - t0
    ok = arun_err < 1e-6 and hung_bad == 0 and mcs_bad == 0 and dt < 30.0
    report(4, ok, f"arun max err {arun_err:.1e}, hungarian mismatches {hung_bad}/200, "
                  f"consistent-set mismatches {mcs_bad}/200, {dt:.1f} s")


def case_builder(suite, case):
    return dict(suite_cases(suite))[case]


def mean_errors(results):
    m = [r.metrics for r in results]
    return (float(np.mean([x.x_err_mean for x in m])), float(np.mean([x.y_err_mean for x in m])),
            float(np.mean([x.yaw_err_mean for x in m])))


def test_criterion_5_constant_bias_circle():
    build = case_builder("pads-tableII", 3)
    t0 = time.perf_counter()
    results = [run(build(seed)) for seed in range(5)]
    dt = time.perf_counter() - t0
    ex, ey, eyaw = mean_errors(results)
    epochs = min(r.metrics.n_align_epochs for r in results)
    ok = ex <= 0.10 and ey <= 0.10 and eyaw <= 1.0 and epochs > 0 and dt < 60.0
    report(5, ok, f"x {ex:.3f} m, y {ey:.3f} m, yaw {eyaw:.2f} deg over 5 seeds, {dt:.1f} s")


def test_criterion_6_hardest_linear_drift():
    build = case_builder("random-tableIII", 28)
    t0 = time.perf_counter()
    results = [run(build(seed)) for seed in range(5)]
    dt = time.perf_counter() - t0
    ex, ey, eyaw = mean_errors(results)
    epochs = min(r.metrics.n_align_epochs for r in results)
    ok = ex <= 0.30 and ey <= 0.30 and eyaw <= 3.5 and epochs > 0 and dt < 120.0
    report(6, ok, f"x {ex:.3f} m, y {ey:.3f} m, yaw {eyaw:.2f} deg over 5 seeds, {dt:.1f} s")


def test_criterion_7_multiagent_suites():
    t0 = time.perf_counter()
    rows = []
    for name in ("multiagent-tableIV", "multiagent-tableV"):
        rows += run_suite(name, seeds=(0, 1, 2))[0]
    dt = time.perf_counter() - t0
    colls = sum(int(r["collisions"]) for r in rows)
    ok = len(rows) == 42 and colls == 0 and dt < 900.0
    report(7, ok, f"{len(rows)} runs, {colls} collisions, {dt:.0f} s")


def test_criterion_8_implicit_tracking_ablation():
    t0 = time.perf_counter()
    on = [run(ablation_scenario(True, seed=s)).metrics for s in range(20)]
    off = [run(ablation_scenario(False, seed=s)).metrics for s in range(20)]
    dt = time.perf_counter() - t0
    r_on = float(np.mean([m.unknown_fov_rate for m in on]))
    r_off = float(np.mean([m.unknown_fov_rate for m in off]))
    colls = sum(m.collisions for m in on + off)
    ok = r_on >= 5.0 * r_off and r_on > 0 and colls == 0
    report(8, ok, f"unknown-space FOV {r_on:.2f}% vs {r_off:.2f}% ablated, "
                  f"{colls} collisions, {dt:.0f} s")


def flown_paths(commits, t):
    """What each agent actually flies: its latest commit that has started."""
    out = {}
    for i, log in commits.items():
        pos = np.empty((len(t), 3))
        for k, tk in enumerate(t):
            started = [m for m in log if m.trajectory.t_in <= tk + 1e-12]
            m = max(started, key=lambda m: (m.trajectory.t_in, m.seq)) if started else log[0]
            pos[k] = m.trajectory.position(tk, hold=True)
        out[i] = pos
    return out


def test_criterion_9_deconfliction_safety():
    rng = np.random.default_rng(9)
    t0 = time.perf_counter()
    conflicts, commits = 0, 0
    for run_id in range(100):
        n = int(rng.integers(2, 9))
        window = float(rng.uniform(0.3, 0.6))
        cfg = ProtocolConfig(delay_check_duration=window, agent_radius=0.3, check_dt=0.05,
                             max_delay=0.3)
        res = run_random_protocol(n, run_id, cfg, duration=20.0, max_delay=0.3)
        commits += res.n_committed
        paths = flown_paths(res.commits, np.arange(0.0, 30.0, 0.02))
        for a, b in itertools.combinations(sorted(paths), 2):
            conflicts += bool(np.min(np.linalg.norm(paths[a] - paths[b], axis=1)) <= 0.6)
    dt = time.perf_counter() - t0
    ok = conflicts == 0 and commits > 0 and dt < 600.0
    report(9, ok, f"100 runs, {commits} commits, {conflicts} conflicting pairs, {dt:.0f} s")


def test_criterion_10_determinism(tmp_path):
    scenarios = [case_builder("random-tableIII", 28)(4).model_copy(update={"duration": 10.0}),
                 case_builder("multiagent-tableIV", 35)(1).model_copy(update={"duration": 8.0}),
                 ablation_scenario(True, seed=3).model_copy(update={"duration": 8.0})]
    same = True
    for k, sc in enumerate(scenarios):
        a = write_run(run(sc), tmp_path / f"{k}a")
        b = write_run(run(sc), tmp_path / f"{k}b")
        for name in ("metrics.csv", "events.jsonl"):
            same &= (a / name).read_bytes() == (b / name).read_bytes()
    report(10, same, f"{len(scenarios)} scenarios run twice, byte-identical={same}")
