import math

import numpy as np
import pytest

from uaswarm.trajectory import SplineTrajectory


def random_spline(rng, n_intervals=None, t_in=None, duration=None):
    n = int(rng.integers(3, 9)) if n_intervals is None else n_intervals
    t0 = float(rng.uniform(0, 5)) if t_in is None else t_in
    D = float(rng.uniform(1, 8)) if duration is None else duration
    pos = rng.normal(scale=3.0, size=(n + 3, 3))
    yaw = rng.normal(scale=1.0, size=n + 2)
    return SplineTrajectory(pos, yaw, t0, t0 + D)


def chi2_3_cdf(x):
    """Closed form of the 3-dof chi-square CDF."""
    return math.erf(math.sqrt(x / 2)) - math.sqrt(2 * x / math.pi) * math.exp(-x / 2)


def chi2_3_quantile(level, lo=0.0, hi=100.0):
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if chi2_3_cdf(mid) < level:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
