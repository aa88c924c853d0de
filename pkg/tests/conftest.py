import numpy as np
import pytest

from bosegp.fock import EXCITATION, PARTICLE, build_basis, lattice_modes
from bosegp.scattering import Potential


@pytest.fixture(scope="session")
def well_unit():
    """Square well with V0 = 2 and R = 1 (closed-form scattering length 1 - tanh 1)."""
    return Potential.square_well(2.0, 1.0)


@pytest.fixture(scope="session")
def well():
    """Narrow well used for the many-body workloads; its support stays inside N*ell."""
    return Potential.square_well(12.5, 0.4)


@pytest.fixture(scope="session")
def zero_potential():
    return Potential.square_well(0.0, 0.4)


@pytest.fixture(scope="session")
def exc3():
    return build_basis(lattice_modes(1), 3, EXCITATION)


@pytest.fixture(scope="session")
def full3():
    return build_basis(lattice_modes(1, include_zero=True), 3, PARTICLE)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
