import numpy as np
import pytest

from wqed.model import Direction, PhysicalParams, WavepacketSpec


@pytest.fixture
def params():
    """gamma = Omega/100, the working point of the generation studies."""
    return PhysicalParams(1.0, 0.01, 1.0)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def right(mu, front=0.0, omega=1.0):
    return WavepacketSpec(mu, omega, front, Direction.RIGHTWARD)


def left(mu, front=0.0, omega=1.0):
    return WavepacketSpec(mu, omega, front, Direction.LEFTWARD)


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
