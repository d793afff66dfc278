import numpy as np
import pytest
from hypothesis import settings

from smpkit import catalog

settings.register_profile("default", deadline=None, max_examples=40)
settings.load_profile("default")


@pytest.fixture
def two_state():
    return catalog.two_state(0.5, 1.0)


@pytest.fixture
def duration_model():
    return catalog.duration_hazard()


@pytest.fixture
def markov3():
    return catalog.markov3()


def exp_oracle(Q, t):
    """Matrix exponential of a constant generator (diagonal filled in here)."""
    from scipy.linalg import expm
    Q = np.array(Q, float)
    np.fill_diagonal(Q, 0.0)
    np.fill_diagonal(Q, -Q.sum(axis=1))
    return expm(Q * t)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[0][2:])):
            terminalreporter.write_line(line)
