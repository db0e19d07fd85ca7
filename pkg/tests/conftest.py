import time

import pytest

from torusnls.potential import Family, PotentialProfile
from torusnls.experiments import (
    fit_modulation,
    lipschitz_experiment,
    prepare_basis,
)

# wall-time of the heavy experiment fixtures, for the runtime acceptance check
FIXTURE_SECONDS: dict[str, float] = {}


def _timed(name, builder):
    t0 = time.perf_counter()
    result = builder()
    FIXTURE_SECONDS[name] = time.perf_counter() - t0
    return result


def _basis(family, k, m):
    return prepare_basis(PotentialProfile(family, k), m)


# --- small bases for unit tests -------------------------------------------

@pytest.fixture(scope="session")
def basis_cusp_32():
    return _basis(Family.CUSP, 32, 16)


@pytest.fixture(scope="session")
def basis_cusp_64():
    return _basis(Family.CUSP, 64, 24)


@pytest.fixture(scope="session")
def basis_smooth_64():
    return _basis(Family.SMOOTH, 64, 64)


# --- acceptance-scale bases ------------------------------------------------

@pytest.fixture(scope="session")
def basis_cusp_128():
    return _basis(Family.CUSP, 128, 24)


@pytest.fixture(scope="session")
def basis_cusp_256():
    return _basis(Family.CUSP, 256, 24)


@pytest.fixture(scope="session")
def basis_cusp_512():
    return _basis(Family.CUSP, 512, 8)


@pytest.fixture(scope="session")
def basis_smooth_128():
    return _basis(Family.SMOOTH, 128, 24)


@pytest.fixture(scope="session")
def basis_smooth_256():
    return _basis(Family.SMOOTH, 256, 24)


@pytest.fixture(scope="session")
def basis_smooth_512():
    return _basis(Family.SMOOTH, 512, 8)


# --- experiment runs shared between criteria -------------------------------

@pytest.fixture(scope="session")
def lip_cusp_128(basis_cusp_128):
    return _timed("lip_cusp_128",
                  lambda: lipschitz_experiment(basis_cusp_128, 0.6, 0.05, m_modes=16))


@pytest.fixture(scope="session")
def lip_cusp_256(basis_cusp_256):
    return _timed("lip_cusp_256",
                  lambda: lipschitz_experiment(basis_cusp_256, 0.6, 0.05, m_modes=16))


@pytest.fixture(scope="session")
def lip_smooth_128(basis_smooth_128):
    return _timed("lip_smooth_128",
                  lambda: lipschitz_experiment(basis_smooth_128, 0.45, 0.05, m_modes=16))


@pytest.fixture(scope="session")
def lip_smooth_256(basis_smooth_256):
    return _timed("lip_smooth_256",
                  lambda: lipschitz_experiment(basis_smooth_256, 0.45, 0.05, m_modes=16))


@pytest.fixture(scope="session")
def onemode_fit_64(basis_cusp_64):
    return _timed("onemode_fit_64",
                  lambda: fit_modulation(basis_cusp_64, 0.15, m_modes=1))


@pytest.fixture(scope="session")
def full_fit_128(basis_cusp_128):
    """The long modulation measurement at the instability amplitude."""
    a = 128.0 ** (-2.0 / 3.0)
    return _timed("full_fit_128",
                  lambda: fit_modulation(basis_cusp_128, a, m_modes=16))
