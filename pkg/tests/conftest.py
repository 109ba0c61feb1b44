import numpy as np
import pytest

from polyxport import presets


@pytest.fixture(scope="session")
def two_squares():
    return presets.two_squares_2d()


@pytest.fixture(scope="session")
def single_square():
    return presets.single_square_2d()


@pytest.fixture(scope="session")
def tiled_crystal():
    return presets.tiled_box_2d(side=0.35, medium="crystal")


@pytest.fixture(scope="session")
def tiled_poisson():
    return presets.tiled_box_2d(side=0.35, medium="poisson")


def random_unit(rng, d=2):
    v = rng.normal(size=d)
    return v / np.linalg.norm(v)
