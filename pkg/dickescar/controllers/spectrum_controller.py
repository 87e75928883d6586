"""Spectrum and density-of-states commands"""

import logging
from typing import Any, Dict

import numpy as np

from dickescar.errors import EmptyWindowError
from dickescar.models import Parity
from dickescar.services.classical import ground_energy
from dickescar.services.hamiltonian import spectrum_window, window_converged
from dickescar.services.shell import dos_branch, integrated_dos, semiclassical_dos

from .base_controller import BaseController, error_envelope

logger = logging.getLogger(__name__)

BRANCH_CODES = {'lower': 0, 'middle': 1, 'plateau': 2}

# Largest j for which `dos` also diagonalizes for the quantum staircase
STAIRCASE_MAX_J = 20


class SpectrumController(BaseController):
    """Handle spectrum and DOS commands"""

    async def handle_spectrum(self) -> Dict[str, Any]:
        """Build, diagonalize, filter and cache; summarize the window"""
        try:
            spec, hit = await self.spectrum_with_hit()
            lo, hi = self.config.window_bounds
            n_spin = spec.basis.n_spin
            full_dim = (spec.basis.n_max + 1) * n_spin
            if spec.basis.parity is Parity.BOTH:
                positive = int(np.sum(spec.basis.signs == 1))
                sector_dims = {'+1': positive, '-1': full_dim - positive}
                in_window = {
                    '+1': int(spectrum_window(spec, lo, hi, Parity.POSITIVE).size),
                    '-1': int(spectrum_window(spec, lo, hi, Parity.NEGATIVE).size),
                }
            else:
                own = spec.basis.parity.value
                other = '-1' if own == '+1' else '+1'
                sector_dims = {own: spec.basis.dim, other: full_dim - spec.basis.dim}
                in_window = {own: int(spectrum_window(spec, lo, hi, spec.basis.parity).size)}

            converged = int(sum(in_window.values()))
            if converged == 0:
                raise EmptyWindowError(
                    f"No converged states in [{lo:.4f}, {hi:.4f}] at n_max={spec.basis.n_max}; "
                    f"the cutoff is too small"
                )
            ground = float(spec.energies[np.flatnonzero(spec.converged_mask)[0]])
            fully = window_converged(spec, lo, hi, self.config.parity)

            lines = [
                f"j={self.params.j:g}",
                f"omega={self.params.omega:g} omega0={self.params.omega0:g} gamma={self.params.gamma:g}",
                f"n_max={spec.basis.n_max}",
                f"parity={spec.basis.parity.value}",
                *[f"sector_dim[{k}]={v}" for k, v in sector_dims.items()],
                f"window=[{lo:.6f}, {hi:.6f}]",
                *[f"converged_in_window[{k}]={v}" for k, v in in_window.items()],
                f"converged_in_window={converged}",
                f"window_fully_converged={fully}",
                f"converged_total={int(spec.converged_mask.sum())}/{spec.size}",
                f"ground_eps={ground:.12g}",
                f"eps_min_classical={ground_energy(self.params):.12g}",
            ]
            self.output.write_text("spectrum_summary.txt", lines)
            self.output.write_table(
                "spectrum.txt", ['k', 'eps', 'parity', 'tail_weight', 'converged'],
                np.column_stack([np.arange(spec.size), spec.energies, spec.parities,
                                 spec.tail_weights, spec.converged_mask.astype(float)])
            )
            for line in lines:
                logger.info(line)

            return {
                'success': True,
                'data': {
                    'dim': spec.basis.dim,
                    'n_max': spec.basis.n_max,
                    'sector_dims': sector_dims,
                    'converged_in_window': in_window,
                    'converged_total': int(spec.converged_mask.sum()),
                    'window_converged': fully,
                    'ground_energy': ground,
                    'cache_hit': hit
                }
            }
        except Exception as e:
            return error_envelope(e, "building spectrum")

    async def handle_dos(self) -> Dict[str, Any]:
        """nu(eps) on a grid with branch labels, plus the quantum staircase at small j"""
        try:
            eps_min = ground_energy(self.params)
            eps_top = max(self.params.omega0 + 0.5, self.config.window_bounds[1])
            grid = np.linspace(eps_min, eps_top, self.config.dos_points)

            nu = np.array(await self.map_blocking(lambda e: semiclassical_dos(e, self.params), grid))
            branches = np.array([BRANCH_CODES[dos_branch(e, self.params)] for e in grid])
            pieces = await self.map_blocking(
                lambda ab: integrated_dos(ab[0], ab[1], self.params), list(zip(grid[:-1], grid[1:]))
            )
            cumulative = np.concatenate([[0.0], np.cumsum(pieces)])

            self.output.write_table(
                "dos.txt", ['eps', 'nu', 'branch', 'cumulative'],
                np.column_stack([grid, nu, branches, cumulative]),
                comments=["branch: 0 lower (eps0 <= eps <= -omega0), 1 middle (|eps| < omega0), "
                          "2 plateau (eps >= omega0)", f"plateau=2j^2/omega={2 * self.params.j ** 2 / self.params.omega:.12g}"]
            )

            data: Dict[str, Any] = {
                'points': int(grid.size),
                'eps_min': eps_min,
                'plateau': 2 * self.params.j ** 2 / self.params.omega,
                'staircase': False
            }
            if self.params.j <= STAIRCASE_MAX_J:
                data.update(await self._staircase(grid))
            return {'success': True, 'data': data}
        except Exception as e:
            return error_envelope(e, "computing density of states")

    async def _staircase(self, grid: np.ndarray) -> Dict[str, Any]:
        """Converged level count (both parities) against the integrated semiclassical DOS"""
        top = float(min(grid[-1], self.config.window_bounds[1]))
        spec, _ = await self.spectrum_with_hit(Parity.BOTH, (-np.inf, top))
        n_max = spec.basis.n_max
        ground = float(spec.energies[0])
        usable = grid[(grid >= ground) & (grid <= top)]
        levels = np.sort(spec.energies[spec.converged_mask])
        quantum = np.searchsorted(levels, usable, side='right').astype(float)
        semiclassical = np.array([integrated_dos(grid[0], e, self.params) for e in usable])

        self.output.write_table(
            "dos_staircase.txt", ['eps', 'quantum_count', 'semiclassical_count'],
            np.column_stack([usable, quantum, semiclassical]),
            comments=[f"n_max={n_max}", "quantum_count counts converged levels of both parities"]
        )
        return {'staircase': True, 'staircase_levels': int(levels.size), 'staircase_n_max': n_max}
