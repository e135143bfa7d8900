import math

import numpy as np
import pytest

from aodlab.signal_model import ArrayGeometry, Scenario, dbm_to_watts, noise_variance, random_schedule

THETA_STAR = math.radians(23.4)
RANGE_STAR = 32.1


@pytest.fixture
def geometry():
    return ArrayGeometry(8, 0.5, 28e9)


@pytest.fixture
def scenario(geometry):
    return Scenario.from_geometry(geometry, THETA_STAR, RANGE_STAR, dbm_to_watts(15.0), noise_variance(-165.0, 1.2e5))


@pytest.fixture
def schedule():
    return random_schedule(np.random.default_rng(0), dbm_to_watts(15.0), 8, 6, 4)


# one line per acceptance criterion, printed in the terminal summary
ACCEPTANCE_LINES = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[key])
