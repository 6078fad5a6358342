import numpy as np
import pytest

from fbm_ips.fbm import TimeGrid, sample_fbm
from fbm_ips.models import DriftModel, get_model
from fbm_ips.simulation import euler_simulate


def _zeros_like(x, mu, v=None):
    shape = np.shape(x) if v is None else np.broadcast(x, v).shape
    return np.zeros((1,) + shape)


def constant_model(c=1.0):
    """b = c: no state or measure dependence."""
    return DriftModel(
        "constant", 1,
        lambda x, mu: np.full((1,) + np.shape(x), float(c)),
        _zeros_like, _zeros_like,
        lipschitz=0.0, dxb_sup=0.0, drift_lower=abs(c), dxb_nonpositive=True, mean_interaction=True,
    )


def identity_model():
    """b(x) = x, no interaction."""
    return DriftModel(
        "identity", 1,
        lambda x, mu: np.asarray(x, float)[None],
        lambda x, mu: np.ones((1,) + np.shape(x)),
        _zeros_like, lipschitz=1.0, dxb_sup=1.0, mean_interaction=True,
    )


def decoupled_arctan():
    """b(x) = 2 - arctan(x): the arctan drift without the mean."""
    return DriftModel(
        "decoupled_arctan", 1,
        lambda x, mu: (2 - np.arctan(x))[None],
        lambda x, mu: (-1 / (1 + np.asarray(x) ** 2))[None],
        _zeros_like, lipschitz=1.0, dxb_sup=1.0, drift_lower=2 - np.pi / 2,
        dxb_nonpositive=True, mean_interaction=True,
    )


def simulate(model="linear", theta=(1.0,), h=0.6, n_part=10, n_steps=100, horizon=1.0,
             sigma=1.0, seed=1, key=(), initial="normal"):
    m = get_model(model) if isinstance(model, str) else model
    grid = TimeGrid(horizon, n_steps)
    noise = sample_fbm(h, grid, n_part, seed, key)
    return euler_simulate(m, theta, sigma, grid, initial, noise, seed, key)


@pytest.fixture
def small_linear():
    return simulate("linear", (2.0,), 0.7, 8, 50)


@pytest.fixture
def small_arctan():
    return simulate("arctan", (3.0,), 0.7, 8, 50)


ACCEPTANCE_LINES: list = []


def report_criterion(label: str, ok: bool, detail: str) -> None:
    """Record one acceptance line; the terminal summary prints them all."""
    line = f"{'PASS' if ok else 'FAIL'}  {label}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
