import sys
from pathlib import Path

import numpy as np
import pytest

from cophik.branin import branin_reference, generate_ensemble
from cophik.grid import Grid
from cophik.phik import Ensemble

DATA = Path(__file__).parent / "data"


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def small_grid():
    return Grid.uniform(2, 9)


@pytest.fixture(scope="session")
def branin_small(small_grid):
    """Reference field and a 40-member ensemble on a 9x9 grid."""
    return branin_reference(small_grid), generate_ensemble(small_grid, 40, seed=3)


@pytest.fixture
def tiny_ensemble():
    """Four random members on a 4x3 grid."""
    g = Grid((0.0, 0.0), (1.0, 2.0), (4, 3))
    Y = np.random.default_rng(7).normal(size=(4, g.size)) + np.linspace(0, 1, g.size)
    return Ensemble(g, Y)


def pytest_terminal_summary(terminalreporter):
    acc = sys.modules.get("test_acceptance")
    if acc is not None and acc.RESULTS:
        terminalreporter.section("acceptance criteria")
        for n in sorted(acc.RESULTS):
            terminalreporter.write_line(acc.RESULTS[n])
