import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(__file__))

from perfpower.strategic import BaseDistribution, Posterior  # noqa: E402

ACCEPTANCE = []


def record(name, passed, detail=""):
    ACCEPTANCE.append((name, bool(passed), detail))


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name, ok, detail in ACCEPTANCE:
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {name}  {detail}")


@pytest.fixture(scope="session")
def uniform_base():
    return BaseDistribution("uniform", (-2.0, 2.0), Posterior("logistic", 4.0, 0.0))


@pytest.fixture(scope="session")
def normal_base():
    return BaseDistribution("normal", (-1.0, 1.0), Posterior("logistic", 2.0, 0.0))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
