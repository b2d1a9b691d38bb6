import numpy as np
import pytest

from kllab import validate


@pytest.fixture
def one_slit():
    return validate([1.0], [-1.0], [1.0])


@pytest.fixture
def two_slits():
    return validate([1.0, 0.5], [-1.0, 0.5], [0.0, 1.5])


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
