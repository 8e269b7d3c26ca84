import numpy as np
import pytest

from truncexp.statistics import StatisticFamily, SupportDomain

ACCEPTANCE_LINES = []


def record_acceptance(number, name, passed, detail=""):
    line = f"[acceptance {number:>2}] {'PASS' if passed else 'FAIL'}  {name}"
    if detail:
        line += f"  ({detail})"
    ACCEPTANCE_LINES.append((number, line))
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def bench():
    """1-D benchmark: phi(x) = x on [0, 1]."""
    return StatisticFamily.polynomial(SupportDomain.unit_box(1), 1)


@pytest.fixture(scope="session")
def sparse2d():
    """Degree-2 polynomial statistics on [-1, 1]^2, shape (1, 5, 1)."""
    return StatisticFamily.polynomial(SupportDomain.box([(-1, 1), (-1, 1)]), 2)
