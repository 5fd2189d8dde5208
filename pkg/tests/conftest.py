import numpy as np
import pytest

from semimax.spectral import Medium


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def _pointwise_medium(eps, eta):
    eps = np.asarray(eps, dtype=float)
    eta = np.asarray(eta, dtype=float)
    return Medium(
        epsilon=lambda x: np.broadcast_to(eps, np.shape(x)[:-1]),
        eta=lambda x: np.broadcast_to(eta, np.shape(x)[:-1]),
        grad_epsilon=lambda x: np.zeros(np.shape(x)),
        grad_eta=lambda x: np.zeros(np.shape(x)),
    )


@pytest.fixture
def pointwise_medium():
    """Factory: medium whose eps/eta are aligned with the leading sample axis."""
    return _pointwise_medium


@pytest.fixture
def samples(rng):
    n = 1000
    x = rng.uniform(-2, 2, size=(n, 3))
    k = rng.normal(size=(n, 3)) * rng.uniform(0.1, 5.0, size=(n, 1))
    eps = rng.uniform(0.2, 5.0, size=n)
    eta = rng.uniform(0.2, 5.0, size=n)
    return x, k, eps, eta


def pytest_terminal_summary(terminalreporter):
    from test_acceptance import SUMMARY

    if SUMMARY:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(SUMMARY):
            terminalreporter.write_line(line)
