import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "default", max_examples=60, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")

TWO_BY_TWO = {
    "C": np.array([[1.0, 2.0], [2.0, 1.0]]),
    "a": np.array([1.0, 1.0]),
    "b": np.array([1.0, 1.0]),
}


def random_problem(rng, n, m, balanced=False, cost="uniform"):
    """Positive random cost with positive masses; ``balanced`` rescales ``b`` to the mass of ``a``."""
    if cost == "uniform":
        C = rng.uniform(0.1, 2.0, size=(n, m))
    else:
        X = rng.standard_normal((n, 2))
        Y = rng.standard_normal((m, 2)) + 1.0
        C = ((X[:, None, :] - Y[None, :, :]) ** 2).sum(-1)
    a = rng.uniform(0.2, 1.0, size=n)
    b = rng.uniform(0.2, 1.0, size=m)
    if balanced:
        b *= a.sum() / b.sum()
    return C, a, b


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def two_by_two():
    return TWO_BY_TWO["C"].copy(), TWO_BY_TWO["a"].copy(), TWO_BY_TWO["b"].copy()


@pytest.fixture
def make_problem():
    return random_problem


def pytest_terminal_summary(terminalreporter):
    from test_acceptance import RESULTS

    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)
