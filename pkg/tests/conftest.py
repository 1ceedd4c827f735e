import numpy as np
import pytest

from synthgen import l_image, square_image


@pytest.fixture(scope="session")
def square_fixture():
    image, mask = square_image()
    return image, mask


@pytest.fixture(scope="session")
def l_fixture():
    image, mask = l_image()
    return image, mask


@pytest.fixture
def rng():
    return np.random.default_rng(0)
