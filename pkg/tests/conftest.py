import numpy as np
import pytest

from twoway_pwb.panel import PanelData

_ACCEPTANCE_LINES = []


@pytest.fixture
def acceptance_log():
    """Append a one-line verdict that is echoed in the terminal summary."""
    return _ACCEPTANCE_LINES.append


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


def small_panel(n=4, t=5, k=2, seed=0, noise=1.0):
    g = np.random.default_rng(seed)
    x = np.concatenate([np.ones((n, t, 1)), g.standard_normal((n, t, k - 1))], axis=-1)
    y = x.sum(axis=-1) + noise * g.standard_normal((n, t))
    return PanelData(y=y, x=x)


@pytest.fixture
def make_panel():
    return small_panel
