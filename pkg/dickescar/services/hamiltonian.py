"""Dicke Hamiltonian in the truncated Fock x angular-momentum basis"""

import logging
import math
from typing import Callable, Optional, Tuple

import numpy as np
import scipy.linalg

from dickescar.config import get_settings
from dickescar.errors import DomainError, NumericalError
from dickescar.models import BasisSpec, ModelParams, Parity, Spectrum, StateVector
from dickescar.services.classical import ground_energy
from dickescar.services.shell import max_field_action

logger = logging.getLogger(__name__)
settings = get_settings()

# Cutoff heuristic and its escalation
CUTOFF_SIGMAS = 4.0
CUTOFF_PAD = 10
CUTOFF_GROWTH = 1.25
MAX_CUTOFF_STEPS = 4


def _spin_size(j: float) -> int:
    two_j = 2 * j
    if abs(two_j - round(two_j)) > 1e-12:
        raise DomainError(f"j must be a positive integer or half-integer, got {j}")
    return int(round(two_j)) + 1


def build_basis(params: ModelParams, n_max: int, parity=Parity.BOTH) -> BasisSpec:
    """Enumerate (n, m) pairs, n-major, restricted to a parity sector"""
    if n_max < 0:
        raise DomainError(f"n_max must be non-negative, got {n_max}")
    parity = Parity.parse(parity)
    if parity is Parity.MIXED:
        raise DomainError("MIXED is not a selectable parity sector")
    n_spin = _spin_size(params.j)

    n, k = np.meshgrid(np.arange(n_max + 1), np.arange(n_spin), indexing='ij')
    n = n.ravel()
    k = k.ravel()
    if parity is not Parity.BOTH:
        # (-1)^(n+m+j) = (-1)^(n+k)
        keep = np.where((n + k) % 2 == 0, 1, -1) == parity.sign
        n, k = n[keep], k[keep]

    return BasisSpec(j=params.j, n_max=n_max, parity=parity, n=n, k=k)


def build_hamiltonian(params: ModelParams, basis: BasisSpec) -> np.ndarray:
    """Dense real symmetric matrix of H_D in the given basis"""
    if abs(basis.j - params.j) > 1e-12:
        raise DomainError(f"Basis built for j={basis.j}, params have j={params.j}")
    j = params.j
    n = basis.n
    m = basis.m
    dim = basis.dim

    H = np.zeros((dim, dim))
    H[np.arange(dim), np.arange(dim)] = params.omega * n + params.omega0 * m

    if params.gamma == 0:
        return H

    coupling = params.gamma / math.sqrt(params.n_atoms)
    table = basis.index_table()
    n_spin = basis.n_spin
    src = np.arange(dim)
    for dk in (1, -1):
        # <n+1, m+dk| a^dagger J_(dk) |n, m>
        target_k = basis.k + dk
        ok = (n < basis.n_max) & (target_k >= 0) & (target_k < n_spin)
        rows = table[n[ok] + 1, target_k[ok]]
        present = rows >= 0
        cols = src[ok][present]
        rows = rows[present]
        mm = m[cols]
        ladder = np.sqrt(j * (j + 1) - mm * (mm + dk))
        values = coupling * np.sqrt(n[cols] + 1) * ladder
        H[rows, cols] = values
        H[cols, rows] = values
    return H


def _eigh(H: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    try:
        return scipy.linalg.eigh(H)
    except (np.linalg.LinAlgError, ValueError) as e:
        logger.error(f"Eigensolver failed on a {H.shape[0]}x{H.shape[0]} block: {e}")
        raise NumericalError(f"Eigensolver failed: {e}") from e


def tail_weights(states: np.ndarray, basis: BasisSpec, tail_width: int) -> np.ndarray:
    """Summed |c|^2 over basis states with n > n_max - tail_width"""
    in_tail = basis.n > basis.n_max - tail_width
    return np.sum(np.abs(states[in_tail, :]) ** 2, axis=0)


def default_tail_width(n_max: int) -> int:
    """max(10, n_max/10), kept below n_max for tiny test bases"""
    return max(0, min(max(10, n_max // 10), n_max - 1))


def default_n_max(params: ModelParams, eps_top: float) -> int:
    """Cutoff from the classical photon number at eps_top; filter_converged is the authority.

    The tail window (n > n_max - tail_width) is pushed past the classical
    turning point by CUTOFF_SIGMAS standard deviations.
    """
    eps_top = max(eps_top, ground_energy(params))
    photons = params.j * max_field_action(eps_top, params)
    needed = photons + CUTOFF_SIGMAS * math.sqrt(photons) + CUTOFF_PAD
    n_max = max(math.ceil(needed), int(2 * params.j) + 10)
    while n_max - default_tail_width(n_max) < needed:
        n_max += 1
    return n_max


def window_converged(spec: Spectrum, lo: float, hi: float, parity=Parity.BOTH) -> bool:
    """True when every state of the sector in [lo, hi] passes the tail check"""
    idx = spectrum_window(spec, lo, hi, parity, converged_only=False)
    return bool(np.all(spec.converged_mask[idx]))


def converge_cutoff(solver: Callable[[int], Spectrum], n_max: int, lo: float, hi: float,
                    parity=Parity.BOTH, max_steps: int = MAX_CUTOFF_STEPS) -> Spectrum:
    """Solve at n_max, raising it until every window state is converged"""
    for step in range(max_steps + 1):
        spec = solver(n_max)
        if window_converged(spec, lo, hi, parity):
            return spec
        idx = spectrum_window(spec, lo, hi, parity, converged_only=False)
        bad = int(np.sum(~spec.converged_mask[idx]))
        if step == max_steps:
            logger.warning(f"{bad}/{idx.size} window states still unconverged at n_max={n_max} "
                           f"after {max_steps} increases")
            break
        bigger = math.ceil(n_max * CUTOFF_GROWTH)
        logger.warning(f"{bad}/{idx.size} window states unconverged at n_max={n_max}; "
                       f"retrying with n_max={bigger}")
        n_max = bigger
    return spec


def diagonalize(H: np.ndarray, params: ModelParams, basis: BasisSpec,
                tail_width: Optional[int] = None, tail_tol: Optional[float] = None) -> Spectrum:
    """Full eigen-decomposition, sector by sector; energies rescaled by 1/j"""
    if H.shape != (basis.dim, basis.dim):
        raise DomainError(f"Matrix shape {H.shape} does not match basis dimension {basis.dim}")
    signs = basis.signs

    if basis.parity is Parity.BOTH:
        energy_blocks = []
        state_blocks = []
        parity_blocks = []
        for sign in (1, -1):
            idx = np.flatnonzero(signs == sign)
            if idx.size == 0:
                continue
            e, v = _eigh(H[np.ix_(idx, idx)])
            full = np.zeros((basis.dim, idx.size))
            full[idx, :] = v
            energy_blocks.append(e)
            state_blocks.append(full)
            parity_blocks.append(np.full(idx.size, sign))
        energies = np.concatenate(energy_blocks)
        states = np.concatenate(state_blocks, axis=1)
        parities = np.concatenate(parity_blocks)
        order = np.argsort(energies, kind='stable')
        energies, states, parities = energies[order], states[:, order], parities[order]
    else:
        energies, states = _eigh(H)
        parities = np.full(energies.size, basis.parity.sign)

    # eigh returns orthonormal columns; renormalize against round-off
    states = states / np.linalg.norm(states, axis=0)
    energies = energies / params.j

    tail_width = default_tail_width(basis.n_max) if tail_width is None else tail_width
    tail_tol = settings.TAIL_TOL if tail_tol is None else tail_tol
    weights = tail_weights(states, basis, tail_width)

    logger.info(f"Diagonalized dim={basis.dim} (parity {basis.parity.value}), "
                f"eps in [{energies[0]:.4f}, {energies[-1]:.4f}]")

    return Spectrum(
        params=params,
        basis=basis,
        energies=energies,
        states=states,
        parities=parities,
        tail_weights=weights,
        converged_mask=_converged(weights, tail_tol),
        tail_width=tail_width,
        tail_tol=tail_tol
    )


def _converged(weights: np.ndarray, tail_tol: float) -> np.ndarray:
    return (weights < tail_tol) | (weights == 0.0)


def filter_converged(spec: Spectrum, tail_width: int, tail_tol: float) -> Spectrum:
    """Flag states whose Fock-tail weight reaches tail_tol as unconverged"""
    if tail_width >= spec.basis.n_max and tail_width > 0:
        raise DomainError(f"tail_width={tail_width} must be below n_max={spec.basis.n_max}")
    weights = tail_weights(spec.states, spec.basis, tail_width)
    mask = _converged(weights, tail_tol)
    logger.debug(f"{int(mask.sum())}/{mask.size} states converged "
                 f"(tail_width={tail_width}, tail_tol={tail_tol:g})")
    return Spectrum(**{
        **dict(spec),
        'tail_weights': weights,
        'converged_mask': mask,
        'tail_width': tail_width,
        'tail_tol': tail_tol
    })


def parity_quantum_number(basis: BasisSpec, state: np.ndarray, tol: float = 1e-10) -> Parity:
    """Sector of a state in a both-parity basis, or MIXED"""
    if basis.parity is not Parity.BOTH:
        return basis.parity
    weights = np.abs(np.asarray(state)) ** 2
    total = weights.sum()
    positive = weights[basis.signs == 1].sum() / total
    if 1.0 - positive < tol:
        return Parity.POSITIVE
    if positive < tol:
        return Parity.NEGATIVE
    return Parity.MIXED


def spectrum_window(spec: Spectrum, lo: float, hi: float,
                    parity=Parity.BOTH, converged_only: bool = True) -> np.ndarray:
    """Indices of eigenstates with lo <= eps <= hi in a sector"""
    parity = Parity.parse(parity)
    mask = (spec.energies >= lo) & (spec.energies <= hi)
    if converged_only:
        mask &= spec.converged_mask
    if parity in (Parity.POSITIVE, Parity.NEGATIVE):
        mask &= spec.parities == parity.sign
    return np.flatnonzero(mask)


def state_vector(spec: Spectrum, k: int) -> StateVector:
    """Eigenstate k as a labeled StateVector"""
    if not 0 <= k < spec.size:
        raise DomainError(f"Eigenstate index {k} out of range [0, {spec.size})")
    return StateVector(
        basis=spec.basis,
        coefficients=spec.states[:, k],
        label=f"E{k}",
        energy=float(spec.energies[k])
    )


def solve(params: ModelParams, n_max: int, parity=Parity.BOTH,
          tail_width: Optional[int] = None, tail_tol: Optional[float] = None) -> Spectrum:
    """build_basis -> build_hamiltonian -> diagonalize"""
    basis = build_basis(params, n_max, parity)
    H = build_hamiltonian(params, basis)
    return diagonalize(H, params, basis, tail_width=tail_width, tail_tol=tail_tol)
