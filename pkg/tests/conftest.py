import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("default", max_examples=60, deadline=None)
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def spd_matrix(rng, c, floor=0.5):
    a = rng.normal(size=(c, c))
    return a @ a.T / c + floor * np.eye(c)


ACCEPTANCE_LINES = []


@pytest.fixture
def acceptance():
    """Record one result line for the acceptance summary."""

    def record(number, title, passed, detail):
        ACCEPTANCE_LINES.append((number, f"criterion {number} [{'PASS' if passed else 'FAIL'}] "
                                         f"{title}: {detail}"))
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
