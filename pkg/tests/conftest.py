import numpy as np
import pytest

import spindist as sd


@pytest.fixture(scope="session")
def grid8():
    """Small benchmark-shaped grid: 8 points on [-0.2, 0.2], delta = pi/10."""
    return sd.alpha_grid(8, -0.2, 0.2, np.pi / 10)


@pytest.fixture(scope="session")
def basis8():
    return sd.random_orthonormal_basis(8, seed=3)


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)
