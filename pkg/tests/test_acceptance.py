"""Statistical end-to-end runs; enable with --runslow"""

import asyncio

import numpy as np
import pytest

from dickescar.main import run_command
from dickescar.models import GridSpec, ModelParams, OrbitCatalog, Parity, QuadSpec, RunConfig
from dickescar.services.classical import ground_energy
from dickescar.services.coherent import husimi, random_goe_state
from dickescar.services.hamiltonian import (
    converge_cutoff, default_n_max, solve, spectrum_window, state_vector, window_converged
)
from dickescar.services.metrics import (
    max_renyi_occupation, occupation_curve, occupation_curves, projected_husimi_moment, scar_measure
)
from dickescar.services.orbits import add_to_catalog, hunt
from dickescar.services.shell import integrated_dos, sample_energy_shell, shell_volume

pytestmark = pytest.mark.slow

CHAOTIC_WINDOW = (-0.65, -0.35)
CENTER = -0.5
WIDTH = 0.3
ALPHAS = [0.0, 0.5, 1.0, 2.0, 3.0, 4.0]
ORBIT_NEIGHBOURHOOD = 0.02


def _config(tmp_path, **kwargs):
    return RunConfig(cache_dir=str(tmp_path / "cache"), out_dir=str(tmp_path / "out"), **kwargs)


def _converged(params, lo, hi, parity):
    return converge_cutoff(lambda n_max: solve(params, n_max, parity),
                           default_n_max(params, hi), lo, hi, parity)


@pytest.fixture(scope="module")
def params30():
    return ModelParams(omega=1.0, omega0=1.0, gamma=1.0, j=30)


@pytest.fixture(scope="module")
def spectrum30(params30):
    spec = _converged(params30, *CHAOTIC_WINDOW, Parity.POSITIVE)
    assert window_converged(spec, *CHAOTIC_WINDOW, Parity.POSITIVE)
    return spec


@pytest.fixture(scope="module")
def window_curves(spectrum30, params30):
    """Occupation curves of every converged +1 eigenstate in the chaotic window, each on its own shell"""
    curves = []
    for k in spectrum_window(spectrum30, *CHAOTIC_WINDOW, Parity.POSITIVE):
        state = state_vector(spectrum30, int(k))
        sample = sample_energy_shell(state.energy, 20000, params30, seed=int(k), scheme="angle")
        curves.append((state, occupation_curve(state, ALPHAS, state.energy, sample)))
    assert len(curves) > 20
    return curves


@pytest.fixture(scope="module")
def catalog30(window_curves, params30):
    """Orbits hunted from the three most localized window states"""
    ranked = sorted(window_curves, key=lambda item: -item[1].lambdas[-1])
    catalog = OrbitCatalog()
    for state, _ in ranked[:3]:
        grid = projected_husimi_moment(state, 4.0, state.energy, params30,
                                       GridSpec(n_Q=41, n_P=41), QuadSpec(n_theta=32))
        found, _ = hunt(state, grid, state.energy, params30, t_max=15.0, max_peaks=4,
                        threads=2, label=state.label)
        for orbit in found.orbits:
            catalog, _ = add_to_catalog(catalog, orbit.model_copy(update={'orbit_id': ''}))
    if not catalog.orbits:
        pytest.skip("no periodic orbit converged from the most localized states")
    return catalog


def test_random_state_baseline(spectrum30, params30):
    states = [random_goe_state(spectrum30, CENTER, WIDTH, Parity.POSITIVE, seed=1 + i) for i in range(20)]
    sample = sample_energy_shell(CENTER, 200000, params30, seed=12345, scheme="angle")
    alphas = [0.5, 1.0, 2.0, 3.0, 4.0]
    curves = occupation_curves(states, alphas, CENTER, sample)

    lambdas = np.stack([c.lambdas for c in curves])
    assert np.all(lambdas.mean(axis=0) >= 0.95)
    assert np.all(lambdas.mean(axis=0) <= 1.10)

    occupations = np.stack([c.occupations for c in curves])
    errors = np.stack([c.occupation_errors for c in curves])
    for alpha in (1.0, 2.0):
        i = alphas.index(alpha)
        sigma = np.hypot(occupations[:, i].std(ddof=1), errors[:, i].mean())
        assert abs(occupations[:, i].mean() - max_renyi_occupation(alpha)) < 3 * sigma
    assert max_renyi_occupation(1.0) == pytest.approx(0.6552, abs=1e-4)


def test_lambda_two_distribution(window_curves):
    lambda_2 = np.array([curve.lambdas[ALPHAS.index(2.0)] for _, curve in window_curves])
    assert np.mean(lambda_2 < 1.5) >= 0.6
    assert lambda_2.max() > 1.5


def test_occupation_non_increasing_in_alpha(window_curves):
    for state, curve in window_curves:
        assert curve.lambdas[0] == 1.0
        assert curve.occupations[0] == 1.0
        steps = np.diff(curve.occupations)
        slack = 3 * np.hypot(curve.occupation_errors[1:], curve.occupation_errors[:-1])
        assert np.all(steps <= slack), state.label


def test_random_states_do_not_scar(spectrum30, params30, catalog30):
    orbit = catalog30.orbits[0]
    sample = sample_energy_shell(orbit.energy, 50000, params30, seed=3, scheme="angle")
    values = np.array([
        scar_measure(random_goe_state(spectrum30, CENTER, WIDTH, Parity.POSITIVE, seed=100 + i),
                     orbit, sample).value
        for i in range(10)
    ])
    assert values.mean() <= 1.0 + 3 * values.std(ddof=1) / np.sqrt(values.size)


def test_eigenstate_near_short_orbit_is_scarred(spectrum30, params30, catalog30):
    best = 0.0
    for orbit in catalog30.orbits:
        sample = sample_energy_shell(orbit.energy, 50000, params30, seed=4, scheme="angle")
        nearby = spectrum_window(spectrum30, orbit.energy - ORBIT_NEIGHBOURHOOD,
                                 orbit.energy + ORBIT_NEIGHBOURHOOD, Parity.POSITIVE)
        for k in nearby:
            best = max(best, scar_measure(state_vector(spectrum30, int(k)), orbit, sample).value)
    assert best > 3.0


def test_level_count_follows_semiclassical_dos():
    params = ModelParams(omega=1.0, omega0=1.0, gamma=1.0, j=20)
    lo, hi = ground_energy(params) + 0.1, -0.2
    spec = _converged(params, lo, hi, Parity.BOTH)
    inside = (spec.energies >= lo) & (spec.energies <= hi)
    assert np.all(spec.converged_mask[inside])
    quantum = int(np.sum(inside))
    assert quantum == pytest.approx(integrated_dos(lo, hi, params), rel=0.05)

def test_orbit_hunt_then_scar_measure(tmp_path):
    config = _config(tmp_path, j=6, window=[-0.7, -0.3], samples=5000, grid=41, n_theta=32,
                     t_max=15.0, max_peaks=3)
    hunt = asyncio.run(run_command("orbit-hunt", config))
    assert hunt['success'], hunt
    orbits = hunt['data']['orbits']
    if not orbits:
        pytest.skip("no orbit converged for this state")
    for orbit in orbits:
        assert orbit['T'] > 0
        assert orbit['lambda'] >= 0
        assert np.isfinite(orbit['P_k'])

    measure = asyncio.run(run_command("scar-measure", config))
    assert measure['success'], measure
    rows = {row['orbit']: row for row in measure['data']['rows']}
    for orbit in orbits:
        assert rows[orbit['id']]['P_k'] == pytest.approx(orbit['P_k'], rel=1e-6)


def test_husimi_resolves_identity(spectrum):
    # integral of Q over the phase space with measure j(2j+1)/(8 pi^2) dx is one
    state = state_vector(spectrum, 0)
    j = spectrum.params.j
    rng = np.random.default_rng(0)
    n = 400000
    q, p = rng.uniform(-5.0, 5.0, (2, n))
    r = 2.0 * np.sqrt(rng.uniform(size=n))
    phi = rng.uniform(0.0, 2 * np.pi, n)
    values = husimi(state, np.column_stack([q, p, r * np.cos(phi), r * np.sin(phi)]))
    scale = 100.0 * 4 * np.pi * j * (2 * j + 1) / (8 * np.pi ** 2)
    integral = scale * values.mean()
    error = scale * values.std() / np.sqrt(n)
    assert abs(integral - 1.0) < 4 * error + 0.01


@pytest.mark.parametrize("eps", [-1.2, -0.5, 0.5, 1.5])
def test_shell_volume_matches_closed_form(params, eps):
    sample = sample_energy_shell(eps, 200000, params, seed=21, scheme="angle")
    expected = shell_volume(eps, params)
    assert abs(sample.volume - expected) < 4 * sample.volume_error + 5e-3 * expected
