import numpy as np
import pytest

from dickescar.models import ModelParams, Parity
from dickescar.services.cache_service import CacheService

PARAMS = ModelParams(omega=1.0, omega0=1.0, gamma=1.0, j=2)


@pytest.fixture
def cache(tmp_path):
    return CacheService(str(tmp_path / "cache"))


def test_spectrum_miss_then_hit(cache):
    first, hit = cache.get_spectrum(PARAMS, 20, Parity.POSITIVE)
    assert not hit
    second, hit = cache.get_spectrum(PARAMS, 20, Parity.POSITIVE)
    assert hit
    assert np.array_equal(first.energies, second.energies)
    assert np.array_equal(first.states, second.states)
    assert np.array_equal(first.converged_mask, second.converged_mask)
    assert second.basis.parity is Parity.POSITIVE


def test_spectrum_key_depends_on_inputs(cache):
    cache.get_spectrum(PARAMS, 20, Parity.POSITIVE)
    _, hit = cache.get_spectrum(PARAMS, 20, Parity.NEGATIVE)
    assert not hit
    _, hit = cache.get_spectrum(PARAMS.model_copy(update={'gamma': 0.9}), 20, Parity.POSITIVE)
    assert not hit


def test_cached_spectrum_is_refiltered(cache):
    cache.get_spectrum(PARAMS, 20, Parity.POSITIVE)
    spec, hit = cache.get_spectrum(PARAMS, 20, Parity.POSITIVE, tail_width=6, tail_tol=1e-4)
    assert hit
    assert spec.tail_width == 6
    assert spec.tail_tol == 1e-4


def test_corrupted_entry_is_ignored(cache):
    cache.get_spectrum(PARAMS, 20, Parity.POSITIVE)
    path = cache.path('spectrum', cache.key('spectrum', cache.spectrum_inputs(PARAMS, 20, Parity.POSITIVE)))
    path.write_bytes(b"not an archive")
    assert cache.load_spectrum(PARAMS, 20, Parity.POSITIVE) is None
    _, hit = cache.get_spectrum(PARAMS, 20, Parity.POSITIVE)
    assert not hit


def test_sample_miss_then_hit(cache):
    first, hit = cache.get_sample(PARAMS, -0.5, 300, seed=3)
    assert not hit
    second, hit = cache.get_sample(PARAMS, -0.5, 300, seed=3)
    assert hit
    assert np.array_equal(first.points, second.points)
    assert np.array_equal(first.draws, second.draws)
    assert second.volume == pytest.approx(first.volume)
    _, hit = cache.get_sample(PARAMS, -0.5, 300, seed=4)
    assert not hit


def test_key_is_stable():
    a = CacheService.key('shell', {'eps': -0.5, 'n': 10})
    b = CacheService.key('shell', {'n': 10, 'eps': -0.5})
    assert a == b
    assert a != CacheService.key('shell', {'eps': -0.5, 'n': 11})


def test_write_is_atomic_and_locked(cache):
    cache.get_spectrum(PARAMS, 20, Parity.POSITIVE)
    files = sorted(p.name for p in cache.root.iterdir())
    entry = [name for name in files if name.endswith('.npz')]
    assert len(entry) == 1
    assert entry[0].replace('.npz', '.lock') in files
    assert not [name for name in files if name.endswith('.tmp')]
