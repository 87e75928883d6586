"""Glauber x Bloch coherent states and Husimi functions"""

import logging
from typing import Optional, Protocol, Sequence, Tuple, Union

import numpy as np
from scipy.special import gammaln
from scipy.stats import poisson

from dickescar.config import get_settings
from dickescar.errors import DomainError, EmptyWindowError
from dickescar.models import BasisSpec, Parity, PhasePoint, ShellSample, Spectrum, StateVector
from dickescar.models.phase_space import BLOCH_RADIUS_SQ
from dickescar.services import telemetry
from dickescar.services.hamiltonian import spectrum_window

logger = logging.getLogger(__name__)
settings = get_settings()

BOUNDARY_EPS = 1e-12
GLAUBER_TAIL_WARN = 1e-8

PointsLike = Union[PhasePoint, Sequence[float], np.ndarray]


class HusimiSource(Protocol):
    """Anything whose Husimi function can be evaluated at a batch of points"""

    def husimi(self, points: np.ndarray) -> np.ndarray:
        ...


def as_points(x: PointsLike) -> np.ndarray:
    """(S, 4) float array from a PhasePoint, a 4-vector or an array of points"""
    if isinstance(x, PhasePoint):
        return x.as_array()[None, :]
    points = np.asarray(x, dtype=float)
    if points.ndim == 1:
        points = points[None, :]
    if points.shape[-1] != 4:
        raise DomainError(f"Phase points must have 4 components, got shape {points.shape}")
    return points


def regularize_points(points: np.ndarray) -> np.ndarray:
    """Pull points on (or numerically beyond) the Bloch boundary inside the disk"""
    r2 = points[:, 2] ** 2 + points[:, 3] ** 2
    if np.any(r2 > BLOCH_RADIUS_SQ + 1e-9):
        raise DomainError(f"Point outside the Bloch disk (Q^2+P^2={r2.max():.6g})")
    limit = BLOCH_RADIUS_SQ - BOUNDARY_EPS
    outside = r2 > limit
    if not np.any(outside):
        return points
    points = points.copy()
    scale = np.sqrt(limit / r2[outside])
    points[outside, 2] *= scale
    points[outside, 3] *= scale
    return points


def _log_glauber(q: np.ndarray, p: np.ndarray, j: float, n_max: int) -> Tuple[np.ndarray, np.ndarray]:
    """log|<n|q,p>| and arg<n|q,p> with shape (n_max+1, S)"""
    n = np.arange(n_max + 1)[:, None]
    alpha_sq = j * (q ** 2 + p ** 2) / 2
    with np.errstate(divide='ignore', invalid='ignore'):
        log_alpha = 0.5 * np.log(alpha_sq)
        n_log = np.where(n == 0, 0.0, n * log_alpha[None, :])
    log_mod = -alpha_sq[None, :] / 2 + n_log - 0.5 * gammaln(n + 1)
    phase = n * np.arctan2(p, q)[None, :]
    return log_mod, phase


def _log_bloch(Q: np.ndarray, P: np.ndarray, j: float) -> Tuple[np.ndarray, np.ndarray]:
    """log|<j,m|Q,P>| and arg<j,m|Q,P> with shape (2j+1, S), rows k = m + j"""
    two_j = int(round(2 * j))
    k = np.arange(two_j + 1)[:, None]
    r2 = Q ** 2 + P ** 2
    log_binom = gammaln(two_j + 1) - gammaln(k + 1) - gammaln(two_j - k + 1)
    with np.errstate(divide='ignore', invalid='ignore'):
        log_w = 0.5 * (np.log(r2) - np.log(BLOCH_RADIUS_SQ - r2))
        k_log = np.where(k == 0, 0.0, k * log_w[None, :])
    log_mod = j * np.log1p(-r2 / 4)[None, :] + 0.5 * log_binom + k_log
    phase = k * np.arctan2(P, Q)[None, :]
    return log_mod, phase


def glauber_overlap_vector(q: float, p: float, j: float, n_max: int) -> np.ndarray:
    """<n|q,p> for n = 0..n_max"""
    if n_max < 0:
        raise DomainError(f"n_max must be non-negative, got {n_max}")
    log_mod, phase = _log_glauber(np.atleast_1d(float(q)), np.atleast_1d(float(p)), j, n_max)
    return (np.exp(log_mod) * np.exp(1j * phase))[:, 0]


def bloch_overlap_vector(Q: float, P: float, j: float) -> np.ndarray:
    """<j,m|Q,P> for m = -j..j"""
    if Q ** 2 + P ** 2 >= BLOCH_RADIUS_SQ:
        raise DomainError(f"Bloch overlap undefined on or beyond the boundary (Q={Q}, P={P})")
    log_mod, phase = _log_bloch(np.atleast_1d(float(Q)), np.atleast_1d(float(P)), j)
    return (np.exp(log_mod) * np.exp(1j * phase))[:, 0]


def glauber_tail_weight(q, p, j: float, n_max: int) -> np.ndarray:
    """Poisson mass of the Glauber state beyond the cutoff"""
    alpha_sq = j * (np.asarray(q, dtype=float) ** 2 + np.asarray(p, dtype=float) ** 2) / 2
    return poisson.sf(n_max, alpha_sq)


def coherent_overlap(x: PointsLike, y: PointsLike, j: float) -> np.ndarray:
    """|<x|y>|^2 in closed form, broadcasting over leading axes"""
    x = np.asarray(x.as_array() if isinstance(x, PhasePoint) else x, dtype=float)
    y = np.asarray(y.as_array() if isinstance(y, PhasePoint) else y, dtype=float)
    dq = x[..., 0] - y[..., 0]
    dp = x[..., 1] - y[..., 1]
    log_glauber = -(j / 2) * (dq ** 2 + dp ** 2)

    wx = _stereographic(x[..., 2], x[..., 3])
    wy = _stereographic(y[..., 2], y[..., 3])
    num = np.abs(1 + np.conj(wx) * wy) ** 2
    den = (1 + np.abs(wx) ** 2) * (1 + np.abs(wy) ** 2)
    with np.errstate(divide='ignore'):
        log_bloch = 2 * j * (np.log(num) - np.log(den))
    return np.exp(log_glauber + log_bloch)


def _stereographic(Q, P):
    r2 = np.minimum(Q ** 2 + P ** 2, BLOCH_RADIUS_SQ - BOUNDARY_EPS)
    return (Q + 1j * P) / np.sqrt(BLOCH_RADIUS_SQ - r2)


class HusimiEvaluator:
    """Husimi functions of one or several pure states over a shared basis.

    The coefficients are scattered onto an (n, k) grid once; each chunk of
    phase points then costs one tensor contraction against the Glauber and
    Bloch overlap blocks, shared by all states.
    """

    def __init__(self, basis: BasisSpec, coefficients: np.ndarray, chunk: Optional[int] = None):
        coefficients = np.asarray(coefficients)
        self.single = coefficients.ndim == 1
        if self.single:
            coefficients = coefficients[:, None]
        if coefficients.shape[0] != basis.dim:
            raise DomainError(f"Coefficients of length {coefficients.shape[0]} "
                              f"do not match basis dimension {basis.dim}")
        self.basis = basis
        self.j = basis.j
        self.n_states = coefficients.shape[1]
        self.chunk = chunk or settings.HUSIMI_CHUNK
        grid = np.zeros((basis.n_max + 1, basis.n_spin, self.n_states), dtype=complex)
        grid[basis.n, basis.k, :] = coefficients
        self._grid = grid

    @classmethod
    def for_state(cls, state: StateVector) -> "HusimiEvaluator":
        return cls(state.basis, state.coefficients)

    @classmethod
    def for_states(cls, states: Sequence[StateVector]) -> "HusimiEvaluator":
        if not states:
            raise DomainError("No states given")
        basis = states[0].basis
        return cls(basis, np.stack([s.coefficients for s in states], axis=1))

    def husimi(self, points: PointsLike) -> np.ndarray:
        """Q(x) per point; shape (S,) for one state, (n_states, S) otherwise"""
        points = regularize_points(as_points(points))
        out = np.empty((self.n_states, points.shape[0]))
        heavy_tail = 0
        for start in range(0, points.shape[0], self.chunk):
            block = points[start:start + self.chunk]
            out[:, start:start + self.chunk] = self._evaluate(block)
            tail = glauber_tail_weight(block[:, 0], block[:, 1], self.j, self.basis.n_max)
            heavy_tail += int(np.count_nonzero(tail > GLAUBER_TAIL_WARN))
        telemetry.HUSIMI_POINTS.inc(points.shape[0])
        if heavy_tail:
            logger.warning(f"Glauber tail beyond n_max={self.basis.n_max} exceeds "
                           f"{GLAUBER_TAIL_WARN:g} at {heavy_tail}/{points.shape[0]} points")
        return out[0] if self.single else out

    def _evaluate(self, block: np.ndarray) -> np.ndarray:
        g_mod, g_phase = _log_glauber(block[:, 0], block[:, 1], self.j, self.basis.n_max)
        b_mod, b_phase = _log_bloch(block[:, 2], block[:, 3], self.j)
        # <x|n,k> = conj(<n|q,p>) conj(<k|Q,P>)
        glauber = np.exp(g_mod - 1j * g_phase)
        bloch = np.exp(b_mod - 1j * b_phase)
        partial = np.tensordot(self._grid, glauber, axes=([0], [0]))
        amplitude = np.einsum('ksp,kp->sp', partial, bloch)
        return np.abs(amplitude) ** 2


def husimi(state: StateVector, x: PointsLike) -> Union[float, np.ndarray]:
    """Q_psi(x) = |<x|psi>|^2 at one point or a batch of points"""
    values = HusimiEvaluator.for_state(state).husimi(x)
    if isinstance(x, PhasePoint) or np.asarray(x).ndim == 1:
        return float(values[0])
    return values


class ScaledSource:
    """Husimi source multiplied by a constant"""

    def __init__(self, source: HusimiSource, factor: float):
        self.source = source
        self.factor = factor

    def husimi(self, points: np.ndarray) -> np.ndarray:
        return self.factor * self.source.husimi(points)


class ShellMixture:
    """Husimi of the shell-delocalized mixture rho_eps, as the shell average of coherent overlaps"""

    def __init__(self, sample: ShellSample, j: float, chunk: int = 512):
        self.sample = sample
        self.j = j
        self.chunk = chunk
        self._norm = float(np.sum(sample.weights))

    def husimi(self, points: PointsLike) -> np.ndarray:
        points = as_points(points)
        out = np.empty(points.shape[0])
        nodes = self.sample.points
        weights = self.sample.weights
        # keep the (block, nodes) overlap matrix around a few million entries
        step = max(1, min(self.chunk, 4_000_000 // max(nodes.shape[0], 1)))
        for start in range(0, points.shape[0], step):
            block = points[start:start + step]
            overlaps = coherent_overlap(block[:, None, :], nodes[None, :, :], self.j)
            out[start:start + step] = overlaps @ weights / self._norm
        return out


def coherent_state_vector(x: PhasePoint, basis: BasisSpec, label: str = "coherent") -> StateVector:
    """|x> expanded in a both-parity basis and renormalized after truncation"""
    if basis.parity is not Parity.BOTH:
        raise DomainError("Coherent states have no definite parity; use a both-parity basis")
    glauber = glauber_overlap_vector(x.q, x.p, basis.j, basis.n_max)
    bloch = bloch_overlap_vector(x.Q, x.P, basis.j)
    coefficients = glauber[basis.n] * bloch[basis.k]
    lost = 1.0 - float(np.sum(np.abs(coefficients) ** 2))
    if lost > GLAUBER_TAIL_WARN:
        logger.warning(f"Coherent state at {x.as_array()} loses {lost:.2e} of its norm to the cutoff")
    return StateVector(
        basis=basis,
        coefficients=coefficients / np.linalg.norm(coefficients),
        label=label
    )


def random_goe_state(spec: Spectrum, eps_center: float, width: float,
                     parity=Parity.POSITIVE, seed: int = 0) -> StateVector:
    """Normalized Gaussian superposition of the converged eigenstates in a window"""
    lo, hi = eps_center - width / 2, eps_center + width / 2
    idx = spectrum_window(spec, lo, hi, parity)
    if idx.size < 2:
        raise EmptyWindowError(f"Window [{lo:.4f}, {hi:.4f}] holds {idx.size} converged "
                               f"eigenstates of parity {Parity.parse(parity).value}; need at least 2")
    rng = np.random.Generator(np.random.Philox(seed))
    c = rng.standard_normal(idx.size)
    c /= np.linalg.norm(c)
    coefficients = spec.states[:, idx] @ c
    return StateVector(
        basis=spec.basis,
        coefficients=coefficients / np.linalg.norm(coefficients),
        label=f"R{seed}",
        energy=float(np.sum(c ** 2 * spec.energies[idx]))
    )
