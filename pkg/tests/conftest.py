import pytest

from gsflow import Nonlinearity, shoot

ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def quad():
    return Nonlinearity.power(2)


@pytest.fixture(scope="session")
def cubic():
    return Nonlinearity.power(3)


@pytest.fixture(scope="session")
def xi3(quad):
    return shoot(quad, 3)


@pytest.fixture(scope="session")
def xi2(quad):
    return shoot(quad, 2)


@pytest.fixture(scope="session")
def xi1(quad):
    return shoot(quad, 1)


@pytest.fixture(scope="session")
def xi1_cubic(cubic):
    return shoot(cubic, 1)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line[1])
