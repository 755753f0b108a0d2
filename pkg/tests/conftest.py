import numpy as np
import pytest

from gyrokin.fields import (constant_field, fixed_direction_field,
                            harmonic_general_field)
from gyrokin.quadrature import MomentumBallGrid, SphericalQuadrature
from gyrokin.straighten import RotationField


@pytest.fixture(scope="session")
def const_model():
    return constant_field(1.0)


@pytest.fixture(scope="session")
def fixed_model():
    return fixed_direction_field(b0=1.0, a=0.1, k1=1.0)


@pytest.fixture(scope="session")
def general_model():
    return harmonic_general_field(alpha=0.15)


@pytest.fixture(scope="session")
def general_rotation(general_model):
    return RotationField(general_model)


@pytest.fixture(scope="session")
def sphere_quad():
    return SphericalQuadrature.build(16, 32)


@pytest.fixture(scope="session")
def ball_grid():
    return MomentumBallGrid.build(1.0, n_r=8, n_theta=16, n_z=8)


@pytest.fixture()
def rng():
    return np.random.default_rng(2024)
