"""Shared fixtures and the acceptance summary printed at the end of a run."""

import numpy as np
import pytest

from discretegeom.numerics import make_rng

ACCEPTANCE_LINES = {}


@pytest.fixture
def rng():
    return make_rng(12345)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[key])


def fd_jacobian(f, x, h=1e-5):
    """Central finite-difference Jacobian of ``f`` at the vector ``x``."""
    x = np.asarray(x, dtype=float)
    cols = []
    for j in range(x.size):
        e = np.zeros_like(x)
        e[j] = h
        cols.append((np.asarray(f(x + e)) - np.asarray(f(x - e))) / (2 * h))
    return np.stack(cols, axis=-1)
