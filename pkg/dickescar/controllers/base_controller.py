"""Shared plumbing for command controllers"""

import asyncio
import logging
from typing import Any, Callable, Dict, Iterable, List, Optional, Tuple, TypeVar

import numpy as np

from dickescar.errors import ConfigError, DickeScarError
from dickescar.models import Parity, RunConfig, Spectrum, StateVector
from dickescar.services import CacheService, OutputService
from dickescar.services.coherent import random_goe_state
from dickescar.services.hamiltonian import converge_cutoff, default_n_max, spectrum_window, state_vector

logger = logging.getLogger(__name__)

T = TypeVar('T')


def error_envelope(e: Exception, action: str) -> Dict[str, Any]:
    if isinstance(e, DickeScarError):
        logger.error(f"Error {action}: {e.message}")
        return e.to_envelope()
    logger.exception(f"Unexpected error {action}: {e}")
    return {
        'success': False,
        'error': {
            'code': 'INTERNAL_ERROR',
            'message': str(e)
        }
    }


class BaseController:
    """Holds the run config and services; runs blocking numerics in worker threads"""

    def __init__(self, config: RunConfig, cache: CacheService, output: OutputService):
        self.config = config
        self.cache = cache
        self.output = output
        self.params = config.model_params()
        self._slots = asyncio.Semaphore(config.threads)
        self._random_labels = set()

    async def run_blocking(self, fn: Callable[..., T], *args, **kwargs) -> T:
        async with self._slots:
            return await asyncio.to_thread(fn, *args, **kwargs)

    async def map_blocking(self, fn: Callable[[Any], T], items: Iterable[Any]) -> List[T]:
        """fn over items in worker threads; results in submission order"""
        return list(await asyncio.gather(*(self.run_blocking(fn, item) for item in items)))

    def _solve_window(self, parity: Parity, lo: float, hi: float) -> Tuple[Spectrum, bool]:
        """Cached spectrum whose states in [lo, hi] are converged; an explicit n_max is taken as given"""
        hits: List[bool] = []

        def solver(n_max: int) -> Spectrum:
            spec, hit = self.cache.get_spectrum(self.params, n_max, parity,
                                                self.config.tail_width, self.config.tail_tol)
            hits.append(hit)
            return spec

        if self.config.n_max is not None:
            return solver(self.config.n_max), hits[-1]
        spec = converge_cutoff(solver, default_n_max(self.params, hi), lo, hi, parity)
        return spec, hits[-1]

    async def spectrum_with_hit(self, parity: Optional[Parity] = None,
                                window: Optional[Tuple[float, float]] = None) -> Tuple[Spectrum, bool]:
        parity = self.config.parity if parity is None else parity
        lo, hi = self.config.window_bounds if window is None else window
        return await self.run_blocking(self._solve_window, parity, lo, hi)

    async def spectrum(self, parity: Optional[Parity] = None) -> Spectrum:
        spec, _ = await self.spectrum_with_hit(parity)
        return spec

    def window_indices(self, spec: Spectrum) -> np.ndarray:
        lo, hi = self.config.window_bounds
        return spectrum_window(spec, lo, hi, self.config.parity)

    def random_state(self, spec: Spectrum, seed: int) -> StateVector:
        state = random_goe_state(spec, self.config.window_center, self.config.window_width,
                                 self.config.parity, seed=seed)
        self._random_labels.add(state.label)
        return state

    def select_states(self, spec: Spectrum) -> List[StateVector]:
        """Resolve selectors: `E<k>` or `<k>` eigenstate k, `R<seed>` random state, `center`"""
        selectors = self.config.states or ['center']
        states = []
        for selector in selectors:
            text = selector.strip()
            if text.lower() == 'center':
                idx = self.window_indices(spec)
                if idx.size == 0:
                    raise ConfigError("No converged eigenstate in the energy window")
                nearest = idx[np.argmin(np.abs(spec.energies[idx] - self.config.window_center))]
                states.append(state_vector(spec, int(nearest)))
            elif text[:1] in ('R', 'r') and text[1:].isdigit():
                states.append(self.random_state(spec, int(text[1:])))
            else:
                digits = text[1:] if text[:1] in ('E', 'e') else text
                if not digits.isdigit():
                    raise ConfigError(f"Unknown state selector {selector!r}")
                k = int(digits)
                if k >= spec.size:
                    raise ConfigError(f"Eigenstate {k} out of range (spectrum has {spec.size} states)")
                if not spec.converged_mask[k]:
                    raise ConfigError(f"Eigenstate {k} is not converged at n_max={spec.basis.n_max}; "
                                      f"raise n_max")
                states.append(state_vector(spec, k))
        return states

    def state_energy(self, state: StateVector) -> float:
        """Shell energy for a state: its eigenvalue, or the window centre for random states"""
        if state.energy is None or state.label in self._random_labels:
            return self.config.window_center
        return state.energy
