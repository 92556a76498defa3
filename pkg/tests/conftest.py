import numpy as np
import pytest

from qpgl import BlockStructure, from_named_model

BS2 = BlockStructure((2,))
OMEGA = np.array([0.7, 0.5])


@pytest.fixture
def bs2():
    return BS2


@pytest.fixture
def cosine():
    return from_named_model("separable-cosine", BS2, rho=0.5)


@pytest.fixture
def omega():
    return OMEGA.copy()


# one line per acceptance criterion, filled in by test_acceptance.py
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
