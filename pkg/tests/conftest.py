import numpy as np
import pytest

from marlpower.simcore import SimConfig


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def cfg():
    return SimConfig()


def random_gains(n, rng, scale=1e-12):
    """Dense positive gain matrix with stronger direct links."""
    g = rng.exponential(scale, size=(n, n))
    g[np.diag_indices(n)] *= 20
    return g


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import REPORT
    except ImportError:
        return
    if REPORT:
        terminalreporter.section("acceptance criteria")
        for line in REPORT:
            terminalreporter.write_line(line)
