import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from binfilter.chain import BinaryMarkovChain, GaussianNodeLikelihood, posterior_chain

settings.register_profile(
    "default", deadline=None, max_examples=40, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")

TOY_Y = (-0.681, -1.585, 0.007, 3.103)

_ACCEPTANCE_LINES: list[str] = []


def record_acceptance(line: str) -> None:
    print(line)
    _ACCEPTANCE_LINES.append(line)


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)


def random_chain(rng: np.random.Generator, n: int, lo: float = 0.02, hi: float = 0.98) -> BinaryMarkovChain:
    return BinaryMarkovChain(float(rng.uniform(lo, hi)), rng.uniform(lo, hi, (n - 1, 2)))


@pytest.fixture(scope="session")
def toy_prior():
    return BinaryMarkovChain.homogeneous(4, 0.7, 0.8)


@pytest.fixture(scope="session")
def toy_posterior(toy_prior):
    return posterior_chain(toy_prior, GaussianNodeLikelihood(2.0), TOY_Y)
