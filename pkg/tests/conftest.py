import numpy as np
import pytest

from lapcom.model import Hyperparams, LatentSpace, ModelState
from lapcom.multiplex import Multiplex


def random_symmetric(rng, n, high=1):
    W = np.triu(rng.integers(0, high + 1, size=(n, n)), 1)
    return W + W.T


def random_space(rng, n, K, w=1.5):
    S = rng.integers(0, K, size=n)
    S[:K] = np.arange(K)
    log_pi = np.log(rng.dirichlet(np.ones(K)))
    return LatentSpace(rng.normal(size=(n, 2)), S, K, w, log_pi, rng.normal(size=(K, 2)),
                       rng.uniform(0.2, 1.5, size=(K, 2)))


def random_state(rng, M, n, G=2, K=2):
    C = rng.integers(0, G, size=M)
    C[:min(G, M)] = np.arange(min(G, M))
    return ModelState(G, np.log(rng.dirichlet(np.ones(G))), 1.3, C, float(rng.normal()),
                      [random_space(rng, n, K) for _ in range(G)])


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


@pytest.fixture
def small_count_multiplex(rng):
    return Multiplex.from_arrays([random_symmetric(rng, 6, high=3) for _ in range(4)], family="count")


@pytest.fixture
def small_binary_multiplex(rng):
    return Multiplex.from_arrays([random_symmetric(rng, 6) for _ in range(4)], family="binary")


@pytest.fixture
def hyper6():
    return Hyperparams.defaults(4, 6)


ACCEPTANCE_LINES = []


def report_criterion(number: int, passed: bool, detail: str) -> bool:
    line = f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return passed


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
