import numpy as np
import pytest

from robreg.data import Dataset


def make_linear(n, p, rng, sigma=1.0, beta=None):
    Z = rng.standard_normal((n, p))
    if beta is None:
        beta = rng.normal(0, 1, p + 1)
    y = beta[0] + Z @ beta[1:] + sigma * rng.standard_normal(n)
    return Dataset.from_predictors(y, Z), np.asarray(beta)


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


@pytest.fixture
def small_data(rng):
    d, _ = make_linear(40, 4, rng)
    return d


# --- acceptance gate reporting ---------------------------------------------

_GATE_LINES = []


@pytest.fixture
def gate():
    """Record one pass/fail line per acceptance criterion and assert it."""
    def check(label, ok, detail):
        line = f"{label}: {'PASS' if ok else 'FAIL'} ({detail})"
        _GATE_LINES.append(line)
        print(line)
        return ok
    return check


def pytest_terminal_summary(terminalreporter):
    if _GATE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in _GATE_LINES:
            terminalreporter.write_line(line)
