"""Orbit hunting and scarring-measure commands"""

import logging
from typing import Any, Dict, List, Tuple

from dickescar.errors import ConfigError, EmptyWindowError
from dickescar.models import (
    HuntFailure, HusimiGrid, OrbitCatalog, PeriodicOrbit, PhasePoint, QuadSpec, ScarMeasurement,
    StateVector
)
from dickescar.services.metrics import SHELL_EPS_TOL, projected_husimi_moment, scar_measure
from dickescar.services.orbits import add_to_catalog, find_husimi_peaks, hunt, orbit_from_point, validate_orbit

from .base_controller import BaseController, error_envelope

logger = logging.getLogger(__name__)

HUNT_ALPHA = 4.0
FAILURE_COLUMNS = ['state', 'seed_index', 'stage', 'code', 'message', 'q', 'p', 'Q', 'P']


class OrbitController(BaseController):
    """Handle orbit-hunt and scar-measure commands"""

    async def _measure(self, state: StateVector, orbit: PeriodicOrbit) -> ScarMeasurement:
        sample, _ = await self.run_blocking(
            self.cache.get_sample, self.params, orbit.energy, self.config.samples,
            self.config.seed, self.config.shell_scheme
        )
        return await self.run_blocking(scar_measure, state, orbit, sample, self.config.n_time, state.label)

    async def _hunt_state(self, state: StateVector) -> Tuple[HusimiGrid, OrbitCatalog, List[HuntFailure]]:
        eps = self.state_energy(state)
        alpha = HUNT_ALPHA if self.config.grid_alpha is None else self.config.grid_alpha
        grid = await self.run_blocking(
            projected_husimi_moment, state, alpha, eps, self.params,
            self.config.grid_spec, QuadSpec(n_theta=self.config.n_theta)
        )
        self.output.write_grid(grid)
        if not find_husimi_peaks(grid, self.config.threshold_frac, self.config.peak_radius):
            raise EmptyWindowError(f"No Husimi peaks above {self.config.threshold_frac:g} of the "
                                   f"maximum for {state.label}; no orbit candidates")
        # hunt runs its own process pool over seeds
        catalog, failures = await self.run_blocking(
            hunt, state, grid, eps, self.params,
            t_max=self.config.t_max,
            candidate_tol=self.config.candidate_tol,
            newton_tol=self.config.newton_tol,
            max_iter=self.config.max_iter,
            threshold_frac=self.config.threshold_frac,
            peak_radius=self.config.peak_radius,
            max_peaks=self.config.max_peaks,
            threads=self.config.threads,
            label=state.label,
            include_mirrors=True
        )
        return grid, catalog, failures

    async def handle_orbit_hunt(self) -> Dict[str, Any]:
        """Peaks of the alpha=4 projected moment -> refined orbits -> catalog with P_k"""
        try:
            spec = await self.spectrum()
            states = self.select_states(spec)

            catalog = OrbitCatalog()
            failures: List[Tuple[str, HuntFailure]] = []
            owners: Dict[str, StateVector] = {}
            for state in states:
                _, found, state_failures = await self._hunt_state(state)
                failures.extend((state.label, f) for f in state_failures)
                for orbit in found.orbits:
                    catalog, added = add_to_catalog(catalog, orbit.model_copy(update={'orbit_id': ''}))
                    if added:
                        owners[catalog.orbits[-1].orbit_id] = state

            for orbit in catalog.orbits:
                for problem in validate_orbit(orbit):
                    logger.warning(f"Orbit {orbit.orbit_id}: {problem}")

            measurements = [await self._measure(owners[o.orbit_id], o) for o in catalog.orbits]
            scar = {m.orbit_id: m for m in measurements}
            self.output.write_catalog(catalog, scar=scar)
            self.output.write_records("orbits/failures.tsv", FAILURE_COLUMNS, [
                {'state': label, 'seed_index': f.seed_index, 'stage': f.stage, 'code': f.code,
                 'message': f.message, **dict(zip('qpQP', f.seed or []))}
                for label, f in failures
            ])

            if not catalog.orbits:
                logger.warning("Orbit hunt finished without any orbit")
            return {
                'success': True,
                'data': {
                    'orbits': [{
                        'id': o.orbit_id, 'state': o.label, 'eps': o.energy, 'T': o.period,
                        'lambda': o.lyapunov, 'T_lambda': o.t_lambda,
                        'P_k': scar[o.orbit_id].value, 'P_k_err': scar[o.orbit_id].error
                    } for o in catalog.orbits],
                    'failures': len(failures)
                }
            }
        except Exception as e:
            return error_envelope(e, "hunting orbits")

    def load_catalog(self) -> OrbitCatalog:
        """Orbits of catalog.tsv rebuilt from their initial points and periods"""
        orbits = []
        for row in self.output.read_catalog():
            x0 = PhasePoint(q=float(row['q']), p=float(row['p']), Q=float(row['Q']), P=float(row['P']))
            orbits.append(orbit_from_point(x0, float(row['T']), self.params, label=row.get('state', ''),
                                           orbit_id=row['id']))
        return OrbitCatalog(orbits=orbits)

    async def handle_scar_measure(self) -> Dict[str, Any]:
        """P_k for each selected state against each selected catalog orbit"""
        try:
            catalog = await self.run_blocking(self.load_catalog)
            wanted = self.config.orbits or catalog.ids()
            missing = [orbit_id for orbit_id in wanted if catalog.get(orbit_id) is None]
            if missing:
                raise ConfigError(f"Unknown orbit id(s) {', '.join(missing)}; "
                                  f"available: {', '.join(catalog.ids()) or 'none'}")

            spec = await self.spectrum()
            states = self.select_states(spec)
            measurements = []
            for state in states:
                eps = self.state_energy(state)
                for orbit_id in wanted:
                    orbit = catalog.get(orbit_id)
                    measurement = await self._measure(state, orbit)
                    if abs(eps - orbit.energy) > SHELL_EPS_TOL:
                        note = f"state eps={eps:.8f} differs from orbit eps={orbit.energy:.8f}"
                        logger.warning(f"{state.label} vs {orbit_id}: {note}; using the orbit energy")
                        measurement = measurement.model_copy(update={'note': note})
                    measurements.append(measurement)

            self.output.write_scar_table(measurements)
            return {
                'success': True,
                'data': {
                    'rows': [{
                        'state': m.state_label, 'orbit': m.orbit_id, 'lambda': m.lyapunov,
                        'T_lambda': m.t_lambda, 'P_k': m.value, 'error': m.error
                    } for m in measurements]
                }
            }
        except Exception as e:
            return error_envelope(e, "measuring scars")
