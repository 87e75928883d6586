"""On-disk cache for spectra and shell samples (versioned .npz with advisory locks)"""

import fcntl
import hashlib
import json
import logging
import os
import tempfile
from contextlib import contextmanager
from pathlib import Path
from typing import Any, Dict, Iterator, Optional, Tuple

import numpy as np

from dickescar.config import get_settings
from dickescar.models import BasisSpec, ModelParams, Parity, ShellSample, Spectrum
from dickescar.models.run_config import FORMAT_VERSION
from dickescar.services import telemetry
from dickescar.services.hamiltonian import default_tail_width, filter_converged, solve
from dickescar.services.shell import sample_energy_shell

logger = logging.getLogger(__name__)
settings = get_settings()


class CacheService:
    """Content-addressed cache under a root directory.

    Entries are `<kind>-<sha256>.npz`; the hash covers the format version and
    every input that determines the stored arrays. Readers take a shared
    flock on a sidecar lock file, writers an exclusive one.
    """

    def __init__(self, cache_dir: Optional[str] = None):
        self.root = Path(cache_dir or settings.CACHE_DIR).expanduser()
        self.root.mkdir(parents=True, exist_ok=True)

    @staticmethod
    def key(kind: str, inputs: Dict[str, Any]) -> str:
        payload = json.dumps({'format_version': FORMAT_VERSION, 'kind': kind, **inputs}, sort_keys=True)
        return hashlib.sha256(payload.encode()).hexdigest()

    def path(self, kind: str, key: str) -> Path:
        return self.root / f"{kind}-{key}.npz"

    @contextmanager
    def _locked(self, path: Path, exclusive: bool) -> Iterator[None]:
        lock_path = path.with_suffix('.lock')
        with open(lock_path, 'a') as handle:
            fcntl.flock(handle, fcntl.LOCK_EX if exclusive else fcntl.LOCK_SH)
            try:
                yield
            finally:
                fcntl.flock(handle, fcntl.LOCK_UN)

    def _write(self, path: Path, arrays: Dict[str, np.ndarray]):
        with self._locked(path, exclusive=True):
            fd, tmp = tempfile.mkstemp(dir=self.root, suffix='.npz.tmp')
            try:
                with os.fdopen(fd, 'wb') as handle:
                    np.savez(handle, format_version=np.array(FORMAT_VERSION), **arrays)
                os.replace(tmp, path)
            except Exception:
                if os.path.exists(tmp):
                    os.unlink(tmp)
                raise

    def _read(self, path: Path) -> Optional[Dict[str, np.ndarray]]:
        if not path.exists():
            return None
        with self._locked(path, exclusive=False):
            try:
                with np.load(path, allow_pickle=False) as data:
                    arrays = {name: data[name] for name in data.files}
            except (OSError, ValueError) as e:
                logger.warning(f"Ignoring unreadable cache entry {path.name}: {e}")
                return None
        if int(arrays.get('format_version', -1)) != FORMAT_VERSION:
            logger.warning(f"Ignoring cache entry {path.name} with format version "
                           f"{arrays.get('format_version')}")
            return None
        return arrays

    # Spectra

    @staticmethod
    def spectrum_inputs(params: ModelParams, n_max: int, parity: Parity) -> Dict[str, Any]:
        return {**params.key(), 'n_max': n_max, 'parity': Parity.parse(parity).value}

    def load_spectrum(self, params: ModelParams, n_max: int, parity: Parity,
                      tail_width: Optional[int] = None,
                      tail_tol: Optional[float] = None) -> Optional[Spectrum]:
        path = self.path('spectrum', self.key('spectrum', self.spectrum_inputs(params, n_max, parity)))
        arrays = self._read(path)
        if arrays is None:
            return None
        basis = BasisSpec(j=params.j, n_max=n_max, parity=Parity.parse(parity),
                          n=arrays['n'], k=arrays['k'])
        spec = Spectrum(
            params=params,
            basis=basis,
            energies=arrays['energies'],
            states=arrays['states'],
            parities=arrays['parities'],
            tail_weights=arrays['tail_weights'],
            converged_mask=arrays['converged_mask'],
            tail_width=int(arrays['tail_width']),
            tail_tol=float(arrays['tail_tol'])
        )
        tail_width = default_tail_width(n_max) if tail_width is None else tail_width
        tail_tol = settings.TAIL_TOL if tail_tol is None else tail_tol
        if (tail_width, tail_tol) != (spec.tail_width, spec.tail_tol):
            spec = filter_converged(spec, tail_width, tail_tol)
        return spec

    def store_spectrum(self, spec: Spectrum) -> Path:
        inputs = self.spectrum_inputs(spec.params, spec.basis.n_max, spec.basis.parity)
        path = self.path('spectrum', self.key('spectrum', inputs))
        self._write(path, {
            'n': spec.basis.n,
            'k': spec.basis.k,
            'energies': spec.energies,
            'states': spec.states,
            'parities': spec.parities,
            'tail_weights': spec.tail_weights,
            'converged_mask': spec.converged_mask,
            'tail_width': np.array(spec.tail_width),
            'tail_tol': np.array(spec.tail_tol),
            'inputs': np.array(json.dumps(inputs)),
        })
        logger.debug(f"Stored spectrum {path.name}")
        return path

    def get_spectrum(self, params: ModelParams, n_max: int, parity: Parity,
                     tail_width: Optional[int] = None,
                     tail_tol: Optional[float] = None) -> Tuple[Spectrum, bool]:
        """Cached spectrum or a fresh diagonalization; second item tells whether it was a hit"""
        spec = self.load_spectrum(params, n_max, parity, tail_width, tail_tol)
        if spec is not None:
            telemetry.CACHE_HITS.labels(kind='spectrum').inc()
            logger.info(f"Cache hit: spectrum j={params.j}, n_max={n_max}, parity={Parity.parse(parity).value}")
            return spec, True
        telemetry.CACHE_MISSES.labels(kind='spectrum').inc()
        logger.info(f"Cache miss: diagonalizing j={params.j}, n_max={n_max}, "
                    f"parity={Parity.parse(parity).value}")
        spec = solve(params, n_max, parity, tail_width=tail_width, tail_tol=tail_tol)
        self.store_spectrum(spec)
        return spec, False

    # Shell samples

    @staticmethod
    def sample_inputs(params: ModelParams, eps: float, n: int, seed: int, scheme: str) -> Dict[str, Any]:
        return {**params.key(), 'eps': eps, 'n': n, 'seed': seed, 'scheme': scheme,
                'shard_size': settings.SHELL_SHARD_SIZE}

    def get_sample(self, params: ModelParams, eps: float, n: int, seed: int,
                   scheme: str = "root") -> Tuple[ShellSample, bool]:
        inputs = self.sample_inputs(params, eps, n, seed, scheme)
        path = self.path('shell', self.key('shell', inputs))
        arrays = self._read(path)
        if arrays is not None:
            telemetry.CACHE_HITS.labels(kind='shell').inc()
            logger.info(f"Cache hit: shell sample eps={eps}, n={n}, seed={seed}")
            sample = ShellSample(
                eps=eps,
                points=arrays['points'],
                weights=arrays['weights'],
                draws=arrays['draws'],
                n_draws=n,
                box_volume=float(arrays['box_volume']),
                volume=float(arrays['volume']),
                volume_error=float(arrays['volume_error']),
                seed=seed,
                scheme=scheme,
                j=params.j
            )
            return sample, True

        telemetry.CACHE_MISSES.labels(kind='shell').inc()
        sample = sample_energy_shell(eps, n, params, seed=seed, scheme=scheme)
        self._write(path, {
            'points': sample.points,
            'weights': sample.weights,
            'draws': sample.draws,
            'box_volume': np.array(sample.box_volume),
            'volume': np.array(sample.volume),
            'volume_error': np.array(sample.volume_error),
            'inputs': np.array(json.dumps(inputs)),
        })
        return sample, False
