import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from nlscatter.grid import AsymptoticData, GridSpec, TimeAxis
from nlscatter.oracle import gaussian_data

settings.register_profile("numeric", deadline=None, max_examples=25,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("numeric")

ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def grid1():
    return GridSpec(1, 64.0, 256)


@pytest.fixture(scope="session")
def axis1():
    return TimeAxis(-10.0, 10.0, 201)


@pytest.fixture(scope="session")
def data1(grid1):
    return AsymptoticData(grid1, gaussian_data(grid1, 1.0, 2.0, 0.5, 0.3))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def rel(a, b):
    return float(np.linalg.norm(np.asarray(a) - np.asarray(b)) / np.linalg.norm(np.asarray(b)))


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
