import numpy as np
import pytest

from sizestructured import WeightPair, builtin_family, solve_steady

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def constant_model():
    return builtin_family("constant_coefficient")


@pytest.fixture(scope="session")
def unstable_model():
    return builtin_family("instability_demo")


@pytest.fixture(scope="session")
def daphnia_model():
    return builtin_family("daphnia_vonbertalanffy")


@pytest.fixture(scope="session")
def constant_steady(constant_model):
    return solve_steady(constant_model)


@pytest.fixture(scope="session")
def unstable_steady(unstable_model):
    return solve_steady(unstable_model)


@pytest.fixture(scope="session")
def daphnia_steady(daphnia_model):
    return solve_steady(daphnia_model)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def auto_weights():
    return lambda m: WeightPair.for_model(m)
