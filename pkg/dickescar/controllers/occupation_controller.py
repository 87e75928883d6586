"""Localization commands: Renyi occupation curves and projected Husimi grids"""

import logging
from typing import Any, Dict, List, Sequence

import numpy as np

from dickescar.models import OccupationCurve, QuadSpec, ShellSample, StateVector
from dickescar.services.metrics import count_crossings, occupation_curves, projected_husimi_moments

from .base_controller import BaseController, error_envelope

logger = logging.getLogger(__name__)

SUMMARY_COLUMNS = ['state', 'eps', 'alpha', 'L_alpha', 'L_alpha_err', 'Lambda_alpha', 'Lambda_alpha_err']


class OccupationController(BaseController):
    """Handle occupations and husimi-grid commands"""

    async def _sample(self, eps: float) -> ShellSample:
        sample, _ = await self.run_blocking(
            self.cache.get_sample, self.params, eps, self.config.samples,
            self.config.seed, self.config.shell_scheme
        )
        return sample

    async def _curves(self, states: Sequence[StateVector]) -> List[OccupationCurve]:
        """One batched evaluation per distinct shell energy; curves in input order"""
        groups: Dict[float, List[int]] = {}
        for i, state in enumerate(states):
            groups.setdefault(self.state_energy(state), []).append(i)

        curves: List[OccupationCurve] = [None] * len(states)
        for eps, members in groups.items():
            sample = await self._sample(eps)
            batch = await self.run_blocking(
                occupation_curves, [states[i] for i in members], self.config.alphas, eps, sample
            )
            for i, curve in zip(members, batch):
                curves[i] = curve
        return curves

    async def handle_occupations(self) -> Dict[str, Any]:
        """Lambda_alpha curves for the selected states plus the random-state baseline"""
        try:
            spec = await self.spectrum()
            states = self.select_states(spec)
            baseline_states = [self.random_state(spec, self.config.seed + 1 + i)
                               for i in range(self.config.random_states)]
            logger.info(f"Occupations for {len(states)} states and {len(baseline_states)} "
                        f"random states, n={self.config.samples}")

            curves = await self._curves(states)
            baseline = await self._curves(baseline_states) if baseline_states else []

            for curve in curves:
                self.output.write_curve(curve)
            for curve in baseline:
                self.output.write_curve(curve, subdir="occupations/random")

            records = [
                {'state': c.label, 'eps': c.eps, 'alpha': a, 'L_alpha': c.occupations[i],
                 'L_alpha_err': c.occupation_errors[i], 'Lambda_alpha': c.lambdas[i],
                 'Lambda_alpha_err': c.lambda_errors[i]}
                for c in curves for i, a in enumerate(c.alphas)
            ]
            baseline_mean = None
            if baseline:
                stacked = np.stack([c.lambdas for c in baseline])
                baseline_mean = stacked.mean(axis=0)
                spread = stacked.std(axis=0, ddof=1) if len(baseline) > 1 else np.zeros_like(baseline_mean)
                records.extend(
                    {'state': 'random_mean', 'eps': self.config.window_center, 'alpha': a,
                     'L_alpha': float('nan'), 'L_alpha_err': float('nan'),
                     'Lambda_alpha': baseline_mean[i], 'Lambda_alpha_err': spread[i]}
                    for i, a in enumerate(self.config.alphas)
                )
            self.output.write_records("occupations/summary.txt", SUMMARY_COLUMNS, records,
                                      comments=[f"samples={self.config.samples}", f"seed={self.config.seed}"])

            crossings = count_crossings(curves)
            logger.info(f"{crossings} crossing pairs among {len(curves)} curves")
            return {
                'success': True,
                'data': {
                    'states': [c.label for c in curves],
                    'lambda_max': {c.label: float(np.max(c.lambdas)) for c in curves},
                    'crossings': crossings,
                    'baseline_mean': None if baseline_mean is None else baseline_mean.tolist(),
                }
            }
        except Exception as e:
            return error_envelope(e, "computing occupations")

    async def handle_husimi_grid(self) -> Dict[str, Any]:
        """Projected moment grids for each selected state and alpha"""
        try:
            spec = await self.spectrum()
            states = self.select_states(spec)
            quad = QuadSpec(n_theta=self.config.n_theta)
            grid_spec = self.config.grid_spec

            results = await self.map_blocking(
                lambda state: projected_husimi_moments(
                    state, self.config.alphas, self.state_energy(state), self.params,
                    grid_spec, quad, state.label
                ),
                states
            )
            contrasts: Dict[str, Dict[str, float]] = {}
            unconverged = 0
            for state, grids in zip(states, results):
                contrasts[state.label] = {}
                for grid in grids:
                    self.output.write_grid(grid)
                    unconverged += int(grid.unconverged.sum())
                    if np.any(~grid.empty):
                        contrasts[state.label][f"{grid.alpha:g}"] = grid.contrast()
            return {
                'success': True,
                'data': {
                    'states': [s.label for s in states],
                    'alphas': list(self.config.alphas),
                    'contrast': contrasts,
                    'unconverged_cells': unconverged
                }
            }
        except Exception as e:
            return error_envelope(e, "computing Husimi grids")
