import numpy as np
import pytest
from scipy.stats import unitary_group


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_unitary(d, rng):
    return unitary_group.rvs(d, random_state=rng)


def random_matrix(d, rng):
    return rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))


def random_density(d, rng):
    G = random_matrix(d, rng)
    rho = G @ G.conj().T
    return rho / np.trace(rho)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
