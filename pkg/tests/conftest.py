import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from afdmsense.afdm import AfdmConfig, default_c1

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def small_cfg():
    return AfdmConfig(n_sub=32, c1=default_c1(32, 0.4, 1))


def random_unit(n, rng):
    return np.exp(2j * np.pi * rng.uniform(size=n))


def crandn(rng, *shape):
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2)


# one line per acceptance criterion, echoed after the run
ACCEPTANCE_LINES = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[key])
