import math

import numpy as np
import pytest

from solitonlab.field import Grid
from solitonlab.groundstate import SolitonFamily
from solitonlab.model import NonlinearityModel


@pytest.fixture(scope="session")
def cubic():
    """1D cubic nonlinearity: beta'(s) = 2s, ground state sqrt(E) sech(sqrt(E) x)."""
    return NonlinearityModel("power", sigma=1.0, c=2.0)


@pytest.fixture(scope="session")
def grid512(cubic):
    return Grid(1, 512, 40.0 * math.pi)


@pytest.fixture(scope="session")
def family(cubic):
    return SolitonFamily(cubic, 1, m_ref=1.0)


@pytest.fixture()
def rng():
    return np.random.default_rng(20260808)
