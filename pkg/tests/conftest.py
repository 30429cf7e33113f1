import numpy as np
import pytest

from active_two_sample.sources import Scenario, SourceModel


@pytest.fixture
def null3():
    return Scenario([SourceModel.bernoulli(0.5, 0.5)] * 3, "null")


@pytest.fixture
def one_informative():
    """bernoulli(0.9/0.1) among two fair-coin nulls."""
    return Scenario([SourceModel.bernoulli(0.9, 0.1), SourceModel.bernoulli(0.5, 0.5),
                     SourceModel.bernoulli(0.5, 0.5)], "alternative")


@pytest.fixture
def strong_weak():
    return Scenario([SourceModel.bernoulli(0.9, 0.1), SourceModel.bernoulli(0.55, 0.45)], "alternative")


@pytest.fixture
def rng():
    return np.random.default_rng(20261017)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def acceptance():
    """Record a PASS/FAIL line for the terminal summary, then assert."""
    def record(name, ok, detail):
        line = f"{'PASS' if ok else 'FAIL'}  {name}: {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        assert ok, line
    return record
