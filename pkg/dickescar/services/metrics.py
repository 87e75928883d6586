"""Renyi occupations, localization measure, projected Husimi moments and the scarring measure"""

import logging
import math
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.special import digamma, gammaln, xlogy

from dickescar.config import get_settings
from dickescar.errors import DomainError, EmptyWindowError
from dickescar.models import (
    GridSpec, HusimiGrid, ModelParams, OccupationCurve, PeriodicOrbit, QuadSpec, ScarMeasurement,
    ShellSample, StateVector
)
from dickescar.models.phase_space import BLOCH_RADIUS_SQ
from dickescar.services.coherent import HusimiEvaluator, HusimiSource, as_points, coherent_overlap
from dickescar.services.orbits import sample_orbit
from dickescar.services.shell import sample_average, shell_coefficients

logger = logging.getLogger(__name__)
settings = get_settings()

SHELL_EPS_TOL = 1e-6
# alpha within this distance of 1 uses the Shannon limit
ALPHA_ONE_TOL = 1e-8

SourceLike = Union[StateVector, HusimiSource]


def _source(state: SourceLike) -> Tuple[HusimiSource, str]:
    if isinstance(state, StateVector):
        return HusimiEvaluator.for_state(state), state.label
    return state, getattr(state, 'label', '') or type(state).__name__


def max_renyi_occupation(alpha: float) -> float:
    """Occupation of a random pure state, Gamma(1+alpha)^(1/(1-alpha))"""
    if alpha < 0:
        raise DomainError(f"alpha must be non-negative, got {alpha}")
    if alpha == 0:
        return 1.0
    if abs(alpha - 1.0) < ALPHA_ONE_TOL:
        return math.exp(-digamma(2.0))
    return math.exp(gammaln(1.0 + alpha) / (1.0 - alpha))


def finite_n_moment(N: int, alpha: float) -> float:
    """<|<psi_R|phi>|^(2 alpha)> for random unit vectors of dimension N"""
    if N < 1:
        raise DomainError(f"N must be at least 1, got {N}")
    if alpha < 0:
        raise DomainError(f"alpha must be non-negative, got {alpha}")
    return math.exp(gammaln(N) + gammaln(1.0 + alpha) - gammaln(N + alpha))


class TubularHusimi:
    """Husimi of the tubular state: time average of coherent states along a periodic orbit"""

    def __init__(self, orbit: PeriodicOrbit, n_time: int = 64, chunk: int = 2048):
        if n_time < 16:
            raise DomainError(f"n_time must be at least 16, got {n_time}")
        self.orbit = orbit
        self.n_time = n_time
        self.chunk = chunk
        self.label = f"tube:{orbit.orbit_id or orbit.label}"
        self.nodes = sample_orbit(orbit, n_time)

    def husimi(self, points) -> np.ndarray:
        points = as_points(points)
        out = np.empty(points.shape[0])
        for start in range(0, points.shape[0], self.chunk):
            block = points[start:start + self.chunk]
            overlaps = coherent_overlap(block[:, None, :], self.nodes[None, :, :], self.orbit.params.j)
            out[start:start + self.chunk] = overlaps.mean(axis=1)
        return out


def tubular_husimi(orbit: PeriodicOrbit, x, n_time: int = 64) -> Union[float, np.ndarray]:
    """(1/T) int dt |<x|y(t)>|^2 with n_time equally spaced nodes"""
    values = TubularHusimi(orbit, n_time).husimi(x)
    return float(values[0]) if values.size == 1 else values


def _check_sample(sample: ShellSample, eps: float):
    if abs(sample.eps - eps) > 1e-12:
        raise DomainError(f"Shell sample was drawn at eps={sample.eps}, not {eps}")
    if sample.size == 0 or np.unique(sample.draws).size < 2 or np.sum(sample.weights) <= 0:
        raise EmptyWindowError(f"Degenerate shell sample at eps={eps}")


def _group_index(sample: ShellSample, groups: Optional[int]) -> Tuple[np.ndarray, int]:
    groups = min(groups or settings.JACKKNIFE_GROUPS, sample.n_draws)
    return (sample.draws * groups) // sample.n_draws, groups


def _occupation(alphas: np.ndarray, s0, s1, s_alpha, s_log) -> np.ndarray:
    """Occupations from weight sums (s0), <Q> sums (s1), <Q^alpha> sums and <Q log Q> sums"""
    mean = s1 / s0
    out = np.empty(alphas.shape)
    for i, alpha in enumerate(alphas):
        if alpha == 0:
            out[i] = 1.0
        elif abs(alpha - 1.0) < ALPHA_ONE_TOL:
            out[i] = mean * math.exp(-(s_log / s0) / mean)
        else:
            ratio = (s_alpha[i] / s0) / mean ** alpha
            out[i] = ratio ** (1.0 / (1.0 - alpha))
    return out


def occupations_from_values(values: np.ndarray, alphas: Sequence[float], sample: ShellSample,
                            groups: Optional[int] = None) -> Tuple[np.ndarray, np.ndarray]:
    """Renyi occupations for several alpha from one set of Husimi values, with jackknife errors"""
    alphas = np.asarray(alphas, dtype=float)
    if np.any(alphas < 0):
        raise DomainError("alpha must be non-negative")
    values = np.clip(np.asarray(values, dtype=float), 0.0, None)
    w = sample.weights
    group, n_groups = _group_index(sample, groups)

    def sums(x):
        return np.bincount(group, weights=x, minlength=n_groups)

    g0 = sums(w)
    g1 = sums(w * values)
    g_alpha = np.stack([sums(w * values ** a) for a in alphas])
    g_log = sums(w * xlogy(values, values))

    total = _occupation(alphas, g0.sum(), g1.sum(), g_alpha.sum(axis=1), g_log.sum())
    # Leave-one-group-out replicates; groups without points drop out
    active = np.flatnonzero(g0 > 0)
    if active.size < 2:
        return total, np.zeros_like(total)
    replicates = np.stack([
        _occupation(alphas, g0.sum() - g0[g], g1.sum() - g1[g],
                    g_alpha.sum(axis=1) - g_alpha[:, g], g_log.sum() - g_log[g])
        for g in active
    ])
    k = active.size
    errors = np.sqrt((k - 1) / k * np.sum((replicates - replicates.mean(axis=0)) ** 2, axis=0))
    errors[alphas == 0] = 0.0
    return total, errors


def renyi_occupation(state: SourceLike, alpha: float, eps: float,
                     sample: ShellSample) -> Tuple[float, float]:
    """L_alpha(eps, rho) and its jackknife standard error"""
    if alpha < 0:
        raise DomainError(f"alpha must be non-negative, got {alpha}")
    _check_sample(sample, eps)
    if alpha == 0:
        return 1.0, 0.0
    source, _ = _source(state)
    value, error = occupations_from_values(source.husimi(sample.points), [alpha], sample)
    return float(value[0]), float(error[0])


def lambda_measure(state: SourceLike, alpha: float, eps: float,
                   sample: ShellSample) -> Tuple[float, float]:
    """Lambda_alpha = L_alpha^max / L_alpha"""
    value, error = renyi_occupation(state, alpha, eps, sample)
    ratio = max_renyi_occupation(alpha) / value
    return ratio, ratio * error / value


def occupation_curve(state: SourceLike, alphas: Sequence[float], eps: float,
                     sample: ShellSample, label: Optional[str] = None) -> OccupationCurve:
    """L_alpha and Lambda_alpha for all alphas from one Husimi evaluation"""
    _check_sample(sample, eps)
    source, default_label = _source(state)
    return _curve(source.husimi(sample.points), alphas, eps, sample, label or default_label,
                  getattr(state, 'energy', None))


def occupation_curves(states: Sequence[StateVector], alphas: Sequence[float], eps: float,
                      sample: ShellSample) -> List[OccupationCurve]:
    """occupation_curve for many states sharing one basis and one batched evaluation"""
    _check_sample(sample, eps)
    values = HusimiEvaluator.for_states(states).husimi(sample.points)
    values = np.atleast_2d(values)
    return [_curve(values[i], alphas, eps, sample, state.label, state.energy)
            for i, state in enumerate(states)]


def _curve(values, alphas, eps, sample, label, energy) -> OccupationCurve:
    alphas = np.asarray(alphas, dtype=float)
    occupation, occupation_err = occupations_from_values(values, alphas, sample)
    l_max = np.array([max_renyi_occupation(a) for a in alphas])
    lambdas = l_max / occupation
    lambda_err = lambdas * occupation_err / occupation
    extra = {'state_energy': float(energy)} if energy is not None else {}
    return OccupationCurve(
        label=label,
        eps=eps,
        alphas=alphas,
        occupations=occupation,
        occupation_errors=occupation_err,
        lambdas=lambdas,
        lambda_errors=lambda_err,
        extra=extra
    )


def count_crossings(curves: Sequence[OccupationCurve], tol: float = 1e-12) -> int:
    """Number of curve pairs whose Lambda_alpha curves cross"""
    crossings = 0
    for a in range(len(curves)):
        for b in range(a + 1, len(curves)):
            diff = curves[a].lambdas - curves[b].lambdas
            signs = np.sign(diff[np.abs(diff) > tol])
            if signs.size and np.any(signs != signs[0]):
                crossings += 1
    return crossings


def _shell_nodes(eps: float, grid_spec: GridSpec, n_theta: int, params: ModelParams):
    """Points on the bosonic circle of the shell above every cell centre.

    For fixed (Q, P) the shell is the circle (omega/2)((q + b/omega)^2 + p^2) = E_b,
    on which dq dp delta(h - eps) = dtheta / omega.
    """
    Q_axis, P_axis = grid_spec.axes()
    QQ, PP = np.meshgrid(Q_axis, P_axis)
    Q, P = QQ.ravel(), PP.ravel()
    r2 = Q ** 2 + P ** 2
    inside = r2 < BLOCH_RADIUS_SQ
    b, _ = shell_coefficients(0.0, Q, P, params)
    bosonic = eps - (params.omega0 / 2) * r2 + params.omega0 + b ** 2 / (2 * params.omega)
    active = np.flatnonzero(inside & (bosonic > 0))

    theta = 2 * np.pi * np.arange(n_theta) / n_theta
    radius = np.sqrt(2 * bosonic[active] / params.omega)
    q = -b[active, None] / params.omega + radius[:, None] * np.cos(theta)[None, :]
    p = radius[:, None] * np.sin(theta)[None, :]
    nodes = np.stack([
        q, p,
        np.repeat(Q[active, None], n_theta, axis=1),
        np.repeat(P[active, None], n_theta, axis=1),
    ], axis=-1).reshape(-1, 4)
    return Q_axis, P_axis, active, nodes


def projected_husimi_moments(state: SourceLike, alphas: Sequence[float], eps: float,
                             params: ModelParams, grid_spec: Optional[GridSpec] = None,
                             quad_spec: Optional[QuadSpec] = None,
                             label: Optional[str] = None) -> List[HusimiGrid]:
    """Projected alpha-moments over (Q, P) for several alphas from one Husimi evaluation"""
    grid_spec = grid_spec or GridSpec()
    quad_spec = quad_spec or QuadSpec()
    if any(a < 0 for a in alphas):
        raise DomainError("alpha must be non-negative")
    source, default_label = _source(state)
    n_theta = quad_spec.n_theta
    Q_axis, P_axis, active, nodes = _shell_nodes(eps, grid_spec, n_theta, params)
    values = source.husimi(nodes).reshape(active.size, n_theta) if active.size else np.zeros((0, n_theta))

    node_weight = 2 * np.pi / params.omega / n_theta
    grids = []
    for alpha in alphas:
        powered = values ** alpha
        full = powered.sum(axis=1) * node_weight
        # Every other node gives the same rule at half resolution
        coarse = powered[:, ::2].sum(axis=1) * 2 * node_weight
        scale = np.maximum(np.abs(full), np.finfo(float).tiny)
        unconverged_cells = np.abs(full - coarse) / scale > quad_spec.rel_tol

        grid_values = np.full(grid_spec.n_P * grid_spec.n_Q, np.nan)
        grid_values[active] = full
        unconverged = np.zeros(grid_values.size, dtype=bool)
        unconverged[active] = unconverged_cells
        if np.any(unconverged_cells):
            logger.warning(f"{int(unconverged_cells.sum())} cells of the alpha={alpha:g} moment "
                           f"exceed rel_tol={quad_spec.rel_tol:g} with n_theta={n_theta}")
        grids.append(HusimiGrid(
            Q_axis=Q_axis,
            P_axis=P_axis,
            values=grid_values.reshape(grid_spec.n_P, grid_spec.n_Q),
            unconverged=unconverged.reshape(grid_spec.n_P, grid_spec.n_Q),
            label=label or default_label,
            alpha=float(alpha),
            eps=eps,
            n_nodes=n_theta
        ))
    return grids


def projected_husimi_moment(state: SourceLike, alpha: float, eps: float, params: ModelParams,
                            grid_spec: Optional[GridSpec] = None,
                            quad_spec: Optional[QuadSpec] = None) -> HusimiGrid:
    """int dq dp delta(h_cl - eps) Q(x)^alpha on each (Q, P) cell; NaN outside the shell projection"""
    return projected_husimi_moments(state, [alpha], eps, params, grid_spec, quad_spec)[0]


def projected_tubular_moment(orbit: PeriodicOrbit, eps: float, grid_spec: Optional[GridSpec] = None,
                             quad_spec: Optional[QuadSpec] = None, n_time: int = 64,
                             alpha: float = 1.0, mirror: Optional[PeriodicOrbit] = None) -> HusimiGrid:
    """Projected Husimi of the tubular state; symmetrized with the mirror orbit when given"""
    grid = projected_husimi_moment(TubularHusimi(orbit, n_time), alpha, eps, orbit.params,
                                   grid_spec, quad_spec)
    if mirror is None:
        return grid
    partner = projected_husimi_moment(TubularHusimi(mirror, n_time), alpha, eps, orbit.params,
                                      grid_spec, quad_spec)
    return grid.model_copy(update={
        'values': (grid.values + partner.values) / 2,
        'unconverged': grid.unconverged | partner.unconverged,
        'label': f"{grid.label}+mirror"
    })


def scar_measure(state: SourceLike, orbit: PeriodicOrbit, sample: ShellSample,
                 n_time: int = 64, label: Optional[str] = None) -> ScarMeasurement:
    """P_k(O) = tr(rho_k rho_O) / tr(rho_eps rho_O)"""
    if abs(sample.eps - orbit.energy) > SHELL_EPS_TOL:
        raise DomainError(f"Shell sample at eps={sample.eps} does not match the orbit energy "
                          f"{orbit.energy:.8f}")
    _check_sample(sample, sample.eps)
    source, default_label = _source(state)
    tube = TubularHusimi(orbit, n_time)

    numerator = float(np.mean(source.husimi(tube.nodes)))
    denominator, denominator_err = sample_average(tube.husimi(sample.points), sample)
    value = numerator / denominator
    error = value * denominator_err / denominator
    return ScarMeasurement(
        state_label=label or default_label,
        orbit_id=orbit.orbit_id,
        eps=orbit.energy,
        value=value,
        error=error,
        lyapunov=orbit.lyapunov,
        period=orbit.period,
        numerator=numerator,
        denominator=denominator
    )
