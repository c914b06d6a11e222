import numpy as np
import pytest

from bcns.littlewood_paley import build_partition
from bcns.spectral_core import GridSpec


@pytest.fixture(scope="session")
def grid2():
    return GridSpec(2, 64, 2 * np.pi)


@pytest.fixture(scope="session")
def part2(grid2):
    return build_partition(grid2, j0=0)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
