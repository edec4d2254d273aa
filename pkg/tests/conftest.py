import numpy as np
import pytest

from glblowup.field import make_grid, sample_profile
from glblowup.groundstate import find_ground_state

ACCEPTANCE_LINES = []   # (criterion number, line) pairs filled by test_acceptance


@pytest.fixture(scope="session")
def periodic_grid():
    return make_grid("periodic1d", 1, 20.0, 1024)


@pytest.fixture(scope="session")
def levine_state():
    grid = make_grid("periodic1d", 1, 20.0, 4096)
    return sample_profile("gaussian", {"c": 2.0}, grid)


@pytest.fixture(scope="session")
def q1d():
    return find_ground_state(-1.0, 2.0, 1)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
