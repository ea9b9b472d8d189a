import numpy as np
import pytest

from gramint.grids import TensorGrid
from gramint.interp_alg import node_factors
from gramint.system import make_heat_benchmark

COARSE = ["1:4:9", "4:3:10"]
FINE = ["1:1:10", "5:1:10"]


@pytest.fixture(scope="session")
def heat16():
    return make_heat_benchmark(16)


@pytest.fixture(scope="session")
def heat20():
    return make_heat_benchmark(20)


@pytest.fixture(scope="session")
def coarse20(heat20):
    grid = TensorGrid.from_spec(COARSE)
    return grid, node_factors(heat20, grid)


@pytest.fixture(scope="session")
def fine20(heat20):
    grid = TensorGrid.from_spec(FINE)
    return grid, node_factors(heat20, grid)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
