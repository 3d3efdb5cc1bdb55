import numpy as np
import pytest

from transdeeplab import tensor as T
from transdeeplab.config import tiny_config
from transdeeplab.model import build

# (criterion number, passed, detail) lines gathered by test_acceptance.py
ACCEPTANCE_LINES: list[tuple[int, bool, str]] = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for number, passed, detail in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(f"criterion {number}: {'PASS' if passed else 'FAIL'}  {detail}")


@pytest.fixture
def f64():
    with T.default_dtype(np.float64):
        yield


@pytest.fixture(scope="session")
def tiny_model():
    return build(tiny_config())


@pytest.fixture
def rng():
    return np.random.default_rng(0)
