import numpy as np
import pytest

from qsdlab.model import build_logistic


@pytest.fixture(scope="session")
def logistic():
    return build_logistic(1.0, 1.0, 1.0, 1.0)


@pytest.fixture(scope="session")
def logistic_neg():
    """Lambda0 = -0.2."""
    return build_logistic(0.3, 1.0, 1.0, 1.0)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
