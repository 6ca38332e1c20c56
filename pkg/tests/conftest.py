import pytest

from emdephase.core import E_CHARGE, E_MICRON, Encounter, EnvironmentParticle, InterferometerConfig
from emdephase.ensemble import GasEnsemble

WATER_DIPOLE = 6.17e-30
N2_POLARIZABILITY = 1.903e-40


@pytest.fixture
def desk_config():
    """Charged 1e-15 kg interferometer, dx = 20 um, t_a = 0.5 s, t_e = 1 s."""
    return InterferometerConfig(1e-15, 20e-6, 0.5, 1.0, charge=E_CHARGE)


@pytest.fixture
def neutral_config():
    return InterferometerConfig(1e-15, 20e-6, 0.5, 1.0, dipole=0.1 * E_MICRON, relative_permittivity=5.7)


@pytest.fixture
def electron():
    return EnvironmentParticle(charge=E_CHARGE)


@pytest.fixture
def all_couplings():
    return EnvironmentParticle(charge=E_CHARGE, dipole=WATER_DIPOLE, polarizability=N2_POLARIZABILITY)


@pytest.fixture
def standard_encounter():
    return Encounter(1e-4, 1e-5)


def qgem_setup(count=None, density=1e10):
    cfg = InterferometerConfig(
        1e-15, 10e-6, 1 / 6, 1 / 3, dipole=0.1 * E_MICRON, radius=1e-6, relative_permittivity=5.1
    )
    particle = EnvironmentParticle(dipole=WATER_DIPOLE)
    L = 0.01
    n = density * L**3 if count is None else count
    return cfg, particle, GasEnsemble(n, L, 1e-4, b_min=1e-6)


def cnot_setup(count=None, density=1e7):
    cfg = InterferometerConfig(1e-27, 0.18e-6, 1e-6 / 6, 1e-6 / 3, charge=E_CHARGE)
    particle = EnvironmentParticle(charge=10 * E_CHARGE)
    L = 0.01
    n = density * L**3 if count is None else count
    return cfg, particle, GasEnsemble(n, L, 1e-4, b_min=1e-7)
