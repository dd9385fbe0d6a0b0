import numpy as np
import pytest

from isinghboa.lattice import CouplingDistribution, SpinGlassInstance, generate_instance

PMJ = CouplingDistribution.plus_minus_j()
GAUSS = CouplingDistribution.gaussian()


def ferromagnet(L: int = 4, ground: float | None = None) -> SpinGlassInstance:
    return SpinGlassInstance(L, -np.ones(2 * L * L), PMJ, 0, ground)


def uniform_instance(L: int, value: float) -> SpinGlassInstance:
    return SpinGlassInstance(L, np.full(2 * L * L, value), PMJ, 0)


@pytest.fixture
def ferro4():
    return ferromagnet(4, -32.0)


@pytest.fixture
def pmj5():
    return generate_instance(5, PMJ, 2024)


@pytest.fixture
def gauss5():
    return generate_instance(5, GAUSS, 2024)
