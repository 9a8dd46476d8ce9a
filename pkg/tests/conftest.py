import numpy as np
import pytest

from bbmlab.grid import line_grid
from bbmlab.omega import solve_family
from bbmlab.operator import OperatorL


@pytest.fixture(scope="session")
def op_grid():
    return line_grid(60.0, 16384)


@pytest.fixture(scope="session")
def op(op_grid):
    return OperatorL(op_grid)


@pytest.fixture(scope="session")
def family_half(op):
    """All six profile systems solved at lam = 1/2."""
    return solve_family(0.5, op)


@pytest.fixture(scope="session")
def family_sweep(op):
    """Profile families across the lam range used by the invariants."""
    return {lam: solve_family(lam, op) for lam in (0.1, 0.3, 0.5, 0.7, 0.9)}


def reflect(values: np.ndarray) -> np.ndarray:
    """f(x) -> f(-x) on a grid where x=0 is a point."""
    return np.roll(values[::-1], 1)
