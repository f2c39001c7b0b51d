import numpy as np
import pytest

from drc_voxel.services.grid import make_frustum_geometry, make_uniform_geometry, unit_cube


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def small_uniform():
    return make_uniform_geometry((4, 3, 5), ((-0.4, -0.3, -0.5), (0.4, 0.3, 0.5)))


@pytest.fixture
def small_frustum():
    return make_frustum_geometry((3, 3, 3), 1.0, 2.0, 60.0)


@pytest.fixture
def cube8():
    return make_uniform_geometry(8, unit_cube())
