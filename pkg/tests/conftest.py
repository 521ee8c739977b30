import numpy as np
import pytest

from transposable.core import make_structured_cov


@pytest.fixture
def sigma1():
    return make_structured_cov("block_ar1", 250, 0.9, 10)


@pytest.fixture
def delta1():
    return make_structured_cov("block_ar1", 50, 0.5, 10)


def random_spd(rng, d, jitter=0.5):
    a = rng.standard_normal((d, d))
    return a @ a.T / d + jitter * np.eye(d)


ACCEPTANCE_LINES = []


@pytest.fixture
def criterion():
    """Record one pass/fail line for an acceptance criterion, then assert it."""
    def check(label, ok, detail):
        line = f"criterion {label}: {'PASS' if ok else 'FAIL'} ({detail})"
        ACCEPTANCE_LINES.append(line)
        print(line)
        assert ok, line
    return check


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
