"""Shared fixtures; statistical acceptance runs are opt-in with --runslow"""

import math

import pytest

from dickescar.models import ModelParams, Parity, PhasePoint, RunConfig
from dickescar.services.hamiltonian import build_basis, converge_cutoff, default_n_max, solve
from dickescar.services.orbits import orbit_from_point

# Every state of the shared spectra in this window passes the tail check
WINDOW = (-1.2, 0.0)


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="run slow statistical tests")


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: long statistical acceptance run (needs --runslow)")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture(scope="session")
def params():
    """Superradiant point used throughout: omega = omega0 = 1, gamma = 2 gamma_c"""
    return ModelParams(omega=1.0, omega0=1.0, gamma=1.0, j=3)


@pytest.fixture(scope="session")
def free_params():
    """Uncoupled model with incommensurate frequencies; every orbit is known in closed form"""
    return ModelParams(omega=1.0, omega0=math.sqrt(2.0), gamma=0.0, j=3)


def _converged_spectrum(params, parity):
    return converge_cutoff(lambda n_max: solve(params, n_max, parity),
                           default_n_max(params, WINDOW[1]), *WINDOW, parity)


@pytest.fixture(scope="session")
def spectrum(params):
    return _converged_spectrum(params, Parity.POSITIVE)


@pytest.fixture(scope="session")
def both_spectrum(params):
    return _converged_spectrum(params, Parity.BOTH)


@pytest.fixture(scope="session")
def both_basis():
    return build_basis(ModelParams(omega=1.0, omega0=1.0, gamma=1.0, j=2), 24, Parity.BOTH)


@pytest.fixture(scope="session")
def boson_orbit(free_params):
    """Pure field oscillation q = cos t, p = -sin t with the atoms at rest in the ground state"""
    orbit = orbit_from_point(PhasePoint(q=1.0, p=0.0, Q=0.0, P=0.0), 2 * math.pi, free_params)
    return orbit.model_copy(update={'orbit_id': 'O1'})


@pytest.fixture
def run_config(tmp_path):
    return RunConfig(
        j=3,
        window=list(WINDOW),
        samples=2000,
        random_states=2,
        grid=21,
        n_theta=16,
        alphas=[0.0, 0.5, 1.0, 2.0, 4.0],
        threads=2,
        cache_dir=str(tmp_path / "cache"),
        out_dir=str(tmp_path / "out"),
    )
