import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from capillary_abp.geometry import ConvexBody
from capillary_abp.scenarios import random_polytope

settings.register_profile(
    "default", max_examples=40, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.register_profile(
    "thorough", max_examples=400, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def bodies(N, rng):
    """One body of each kind in dimension N."""
    e = np.zeros(N)
    e[-1] = 1.0
    return [
        ConvexBody.halfspace(e, 0.0),
        ConvexBody.ball(np.zeros(N), 1.0),
        ConvexBody.wedge(np.pi / 2, N),
        random_polytope(N, rng),
    ]


_CRITERIA = pytest.StashKey[list]()


@pytest.fixture
def criterion(request):
    """Record one pass/fail line per acceptance criterion."""
    lines = request.config.stash.setdefault(_CRITERIA, [])

    def record(number, name, passed, detail):
        line = f"criterion {number} {'PASS' if passed else 'FAIL'}: {name} ({detail})"
        lines.append(line)
        print(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_CRITERIA, [])
    if lines:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
