import numpy as np
import pytest

from telapsed.model import RateModel


def smoothstep(x, a=0.5, b=2.0):
    u = np.clip((np.asarray(x, dtype=float) - a) / (b - a), 0.0, 1.0)
    return u * u * (3 - 2 * u)


def weak_model(kappa=0.05 / 1.0):
    """r = 0.5 + s(x) (1 - kappa I): rM = 1.5, |dr/dI| <= kappa, inhibitory, smooth."""
    x = np.linspace(0.0, 60.0, 2401)
    I = np.array([0.0, 1.5])
    s = smoothstep(x)
    table = np.array([0.5 + s * (1 - kappa * i) for i in I])
    return RateModel.tabulated(x, I, table, gamma_bar=kappa)


@pytest.fixture
def step_model():
    return RateModel.step(0.5, lambda I: 0.5 + I)


@pytest.fixture
def tanh15():
    return RateModel.tanh_phi(0.5, 1.5)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
