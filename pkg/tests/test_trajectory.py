import numpy as np
import pytest
from scipy.optimize import linprog

from conftest import random_spline
from uaswarm.exceptions import DomainError
from uaswarm.trajectory import (SplineTrajectory, evaluate, interval_hull, sample_uniform,
                                velocity_control_points)


def in_hull(point, vertices):
    """Feasibility LP: convex weights reproducing the point."""
    n = len(vertices)
    A_eq = np.vstack([vertices.T, np.ones(n)])
    b_eq = np.concatenate([point, [1.0]])
    res = linprog(np.zeros(n), A_eq=A_eq, b_eq=b_eq, bounds=[(0, None)] * n, method="highs")
    return res.status == 0


def test_constant_spline():
    traj = SplineTrajectory.stationary([1.0, -2.0, 3.0], 0.4, 0.0, 5.0)
    for t in np.linspace(0, 5, 11):
        s = evaluate(traj, t)
        assert np.allclose(s.position, [1, -2, 3])
        assert np.allclose(s.velocity, 0) and np.allclose(s.acceleration, 0)
        assert np.allclose(s.jerk, 0) and s.yaw == pytest.approx(0.4)


def test_clamped_endpoints(rng):
    traj = random_spline(rng)
    assert np.allclose(traj.position(traj.t_in), traj.pos_ctrl[0])
    assert np.allclose(traj.position(traj.T), traj.pos_ctrl[-1])
    assert traj.yaw(traj.T) == pytest.approx(traj.yaw_ctrl[-1])


def test_derivatives_match_finite_differences(rng):
    for _ in range(200):
        traj = random_spline(rng)
        # stay clear of knots where higher derivatives jump
        h = traj.duration / traj.n_intervals
        j = int(rng.integers(traj.n_intervals))
        t = traj.t_in + h * (j + rng.uniform(0.1, 0.9))
        eps = 1e-5 * h
        for order in (1, 2, 3):
            lo = traj.derivative(t - eps, order - 1) if order > 1 else traj.position(t - eps)
            hi = traj.derivative(t + eps, order - 1) if order > 1 else traj.position(t + eps)
            fd = (hi - lo) / (2 * eps)
            an = traj.derivative(t, order)
            assert np.allclose(an, fd, rtol=1e-5, atol=1e-5 * max(1.0, np.abs(an).max()))


def test_interval_hull_has_four_points(rng):
    traj = random_spline(rng, n_intervals=5)
    for j in range(5):
        assert interval_hull(traj, j).shape == (4, 3)
    single = random_spline(rng, n_intervals=1)
    assert np.array_equal(interval_hull(single, 0), single.pos_ctrl)


def test_curve_inside_interval_hulls(rng):
    for _ in range(5):
        traj = random_spline(rng)
        for j in range(traj.n_intervals):
            a, b = traj.interval_bounds(j)
            Q = traj.interval_hull(j)
            for t in np.linspace(a, b, 7):
                assert in_hull(traj.position(t), Q)


def test_velocity_control_points_examples(rng):
    traj = SplineTrajectory.stationary([0, 0, 0], 0.0, 0.0, 2.0)
    assert all(np.allclose(V, 0) for V in velocity_control_points(traj))
    n = 4
    probe = SplineTrajectory(np.zeros((n + 3, 3)), np.zeros(n + 2), 0.0, 3.0)
    k = probe.knots_pos
    greville = np.array([k[i + 1:i + 4].mean() for i in range(n + 3)])
    line = SplineTrajectory(np.outer(greville, [1.0, 2.0, 3.0]), np.zeros(n + 2), 0.0, 3.0)
    V = np.concatenate(velocity_control_points(line))
    assert np.allclose(V, [1.0, 2.0, 3.0])


def test_velocity_bounded_by_control_points(rng):
    for _ in range(20):
        traj = random_spline(rng)
        V = np.abs(np.concatenate(velocity_control_points(traj))).max(axis=0)
        t = np.linspace(traj.t_in, traj.T, 500)
        assert np.all(np.abs(traj.derivative(t, 1)).max(axis=0) <= V + 1e-9)


def test_sample_uniform_examples(rng):
    traj = random_spline(rng)
    two = sample_uniform(traj, 2)
    assert np.allclose(two, [traj.pos_ctrl[0], traj.pos_ctrl[-1]])
    pos = rng.normal(size=(4, 3))
    sym = SplineTrajectory(np.vstack([pos, pos[::-1][1:]]), np.zeros(6), 0.0, 4.0)
    t, p = sym.sample_uniform(3)
    assert np.allclose(p[1], sym.position(2.0))
    t, _ = traj.sample_uniform(17)
    assert np.allclose(np.diff(t), np.diff(t)[0], atol=1e-12)


def test_domain_and_hold(rng):
    traj = random_spline(rng)
    with pytest.raises(DomainError):
        traj.position(traj.T + 1.0)
    assert np.allclose(traj.position(traj.T + 1.0, hold=True), traj.pos_ctrl[-1])
    assert np.allclose(traj.derivative(traj.T + 1.0, 1, hold=True), 0.0)


def test_json_roundtrip(rng):
    traj = random_spline(rng)
    back = SplineTrajectory.from_json(traj.to_json())
    assert np.array_equal(back.pos_ctrl, traj.pos_ctrl) and back.T == traj.T


def test_mismatched_interval_counts_rejected():
    with pytest.raises(ValueError):
        SplineTrajectory(np.zeros((7, 3)), np.zeros(4), 0, 1)
