import numpy as np
import pytest

from owns.spectral import full_spectrum
from owns.testbeds import shear_euler, uniform_euler

_VERDICTS = []


def record_verdict(line: str):
    """Remember an acceptance verdict so it is printed once more in the summary."""
    _VERDICTS.append(line)


def pytest_terminal_summary(terminalreporter):
    if _VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in _VERDICTS:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def shear_tb():
    return shear_euler()


@pytest.fixture(scope="session")
def shear_spec(shear_tb):
    return full_spectrum(shear_tb.builder(), shear_tb.s)


@pytest.fixture(scope="session")
def uniform_tb():
    return uniform_euler(n_nodes=8)


@pytest.fixture(scope="session")
def uniform_spec(uniform_tb):
    return full_spectrum(uniform_tb.builder(), uniform_tb.s)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
