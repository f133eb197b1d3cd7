"""Общие фикстуры: канонические данные, z-сетки, фазы."""
import math

import numpy as np
import pytest

from hyperbolic import ZGrid
from profiles import FinalData, canonical_data, phase_pair


@pytest.fixture
def grid_1d():
    return ZGrid.symmetric(8.0, 257, 1)


@pytest.fixture
def grid_2d():
    # 65 x 65 хватает гауссовым данным ширины 1
    return ZGrid.symmetric(8.0, 65, 2)


@pytest.fixture
def data_1d(grid_1d):
    return canonical_data(1, grid=grid_1d)


@pytest.fixture
def phases_1d(data_1d):
    return phase_pair(data_1d)


@pytest.fixture
def data_2d(grid_2d):
    return canonical_data(2, grid=grid_2d)


@pytest.fixture
def phases_2d(data_2d):
    return phase_pair(data_2d)


@pytest.fixture
def real_data_1d(grid_1d):
    """B1 = conj(A1): вещественное решение."""
    A1 = 0.1 * np.exp(-0.5 * grid_1d.axis ** 2) * np.exp(0.3j)
    return FinalData(1, grid_1d, A1, np.conj(A1))


@pytest.fixture
def gaussian():
    return lambda z: np.exp(-0.5 * z * z)


@pytest.fixture
def l0_at_one():
    return 16.0 / (3.0 * math.pi)
