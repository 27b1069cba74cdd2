import os

import numpy as np
import pytest

from nlem.median import PointSet

DATA = os.path.join(os.path.dirname(__file__), "data")


def data_path(name):
    return os.path.join(DATA, name)


def scaled_mu(ps: PointSet) -> float:
    """Penalty matched to the instance's weight and distance scale.

    The default 1e-3 suits intensity-scale patches; unit-scale test problems
    converge orders of magnitude faster with this choice.
    """
    spread = np.sqrt(np.mean(np.sum((ps.points - ps.points.mean(axis=0)) ** 2, axis=1)))
    return float(ps.weights.mean() / max(spread, 1e-12))


def random_instance(rng, n_max=15, d=None, d_max=8, n_min=2):
    n = int(rng.integers(n_min, n_max + 1))
    d = int(rng.integers(1, d_max + 1)) if d is None else d
    return PointSet(rng.standard_normal((n, d)), rng.uniform(0.1, 1.0, n))


def triangle():
    return PointSet([[0.0, 0.0], [1.0, 0.0], [0.5, np.sqrt(3) / 2]])


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES = []


@pytest.fixture
def criterion():
    """Record one PASS/FAIL line per acceptance criterion, then assert it."""
    def record(label, ok, detail):
        line = f"{'PASS' if ok else 'FAIL'} {label}: {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        assert ok, line
    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
