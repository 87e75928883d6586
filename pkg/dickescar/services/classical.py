"""Classical limit: h_cl, Hamilton flow, tangent map and Lyapunov exponents"""

import logging
import math
from typing import Optional, Sequence, Union

import numpy as np
from scipy.integrate import solve_ivp

from dickescar.config import get_settings
from dickescar.errors import DomainError, IntegrationError
from dickescar.models import LyapunovEstimate, ModelParams, PhasePoint, TangentState, Trajectory
from dickescar.models.phase_space import BLOCH_RADIUS_SQ

logger = logging.getLogger(__name__)
settings = get_settings()

# Symplectic form in (q, p; Q, P) ordering
J_SYMPLECTIC = np.array([
    [0.0, 1.0, 0.0, 0.0],
    [-1.0, 0.0, 0.0, 0.0],
    [0.0, 0.0, 0.0, 1.0],
    [0.0, 0.0, -1.0, 0.0],
])

# Integration stops once Q^2+P^2 gets this close to 4
BOUNDARY_MARGIN = 1e-6

ArrayLike = Union[PhasePoint, Sequence[float], np.ndarray]


def _array(x: ArrayLike) -> np.ndarray:
    if isinstance(x, PhasePoint):
        return x.as_array()
    return np.asarray(x, dtype=float)


def _root(Q, P):
    r2 = Q ** 2 + P ** 2
    if np.any(r2 > BLOCH_RADIUS_SQ + 1e-12):
        raise DomainError(f"Point outside the Bloch disk (Q^2+P^2={np.max(r2):.6g})")
    return np.sqrt(np.clip(1.0 - r2 / 4, 0.0, None))


def h_cl(x: ArrayLike, params: ModelParams):
    """Classical energy per j; accepts one point or an (..., 4) array"""
    x = _array(x)
    q, p, Q, P = x[..., 0], x[..., 1], x[..., 2], x[..., 3]
    s = _root(Q, P)
    value = (params.omega / 2) * (p ** 2 + q ** 2) + (params.omega0 / 2) * (P ** 2 + Q ** 2) \
        + 2 * params.gamma * q * Q * s - params.omega0
    return float(value) if np.ndim(value) == 0 else value


def gradient(x: ArrayLike, params: ModelParams) -> np.ndarray:
    """(dh/dq, dh/dp, dh/dQ, dh/dP)"""
    x = _array(x)
    q, p, Q, P = x[..., 0], x[..., 1], x[..., 2], x[..., 3]
    s = _root(Q, P)
    if np.any(s == 0):
        raise DomainError("Hamilton flow is singular on the Bloch boundary")
    w, w0, g = params.omega, params.omega0, params.gamma
    return np.stack([
        w * q + 2 * g * Q * s,
        w * p,
        w0 * Q + 2 * g * q * (s - Q ** 2 / (4 * s)),
        w0 * P - g * q * Q * P / (2 * s),
    ], axis=-1)


def eom(x: ArrayLike, params: ModelParams) -> np.ndarray:
    """(dq/dt, dp/dt, dQ/dt, dP/dt) = J grad h"""
    grad = gradient(x, params)
    return np.stack([grad[..., 1], -grad[..., 0], grad[..., 3], -grad[..., 2]], axis=-1)


def hessian(x: ArrayLike, params: ModelParams) -> np.ndarray:
    """4x4 second derivatives of h_cl at a single point"""
    q, p, Q, P = _array(x)
    s = float(_root(Q, P))
    if s == 0:
        raise DomainError("Hamilton flow is singular on the Bloch boundary")
    w, w0, g = params.omega, params.omega0, params.gamma
    s3 = s ** 3
    h_qQ = 2 * g * (s - Q ** 2 / (4 * s))
    h_qP = -g * Q * P / (2 * s)
    h_QQ = w0 + 2 * g * q * (-3 * Q / (4 * s) - Q ** 3 / (16 * s3))
    h_QP = -g * q * P * (1 / (2 * s) + Q ** 2 / (8 * s3))
    h_PP = w0 - g * q * Q * (1 / (2 * s) + P ** 2 / (8 * s3))
    return np.array([
        [w, 0.0, h_qQ, h_qP],
        [0.0, w, 0.0, 0.0],
        [h_qQ, 0.0, h_QQ, h_QP],
        [h_qP, 0.0, h_QP, h_PP],
    ])


def jacobian(x: ArrayLike, params: ModelParams) -> np.ndarray:
    """Jacobian of the Hamilton vector field, J @ Hess(h)"""
    return J_SYMPLECTIC @ hessian(x, params)


def symplectic_defect(M: np.ndarray) -> float:
    """max |M^T J M - J|"""
    return float(np.max(np.abs(M.T @ J_SYMPLECTIC @ M - J_SYMPLECTIC)))


def ground_energy(params: ModelParams) -> float:
    """Minimum of h_cl (eps_0 in the superradiant phase, -omega0 otherwise)"""
    if not params.superradiant:
        return -params.omega0
    ratio = params.gamma_c ** 2 / params.gamma ** 2
    return -(params.omega0 / 2) * (ratio + 1.0 / ratio)


def energy_minimum(params: ModelParams) -> PhasePoint:
    """Location of the minimum of h_cl (the Q > 0 one of the degenerate pair)"""
    if not params.superradiant:
        return PhasePoint(q=0.0, p=0.0, Q=0.0, P=0.0)
    Q = math.sqrt(2 * (1 - params.gamma_c ** 2 / params.gamma ** 2))
    q = -(2 * params.gamma / params.omega) * Q * math.sqrt(1 - Q ** 2 / 4)
    return PhasePoint(q=q, p=0.0, Q=Q, P=0.0)


def _flow(params: ModelParams):
    w, w0, g = params.omega, params.omega0, params.gamma

    def rhs(t, y):
        q, p, Q, P = y[0], y[1], y[2], y[3]
        s = math.sqrt(max(1.0 - (Q * Q + P * P) / 4, 1e-300))
        h_q = w * q + 2 * g * Q * s
        h_Q = w0 * Q + 2 * g * q * (s - Q * Q / (4 * s))
        h_P = w0 * P - g * q * Q * P / (2 * s)
        return np.array([w * p, -h_q, h_P, -h_Q])

    return rhs


def _boundary_event(t, y):
    return BLOCH_RADIUS_SQ - BOUNDARY_MARGIN - (y[2] ** 2 + y[3] ** 2)


_boundary_event.terminal = True
_boundary_event.direction = -1


def _check(sol, t_span: float, what: str):
    if sol.status == -1:
        logger.error(f"{what} failed: {sol.message}")
        raise IntegrationError(f"{what} failed: {sol.message}")
    if sol.status == 1:
        t_hit = sol.t_events[0][0]
        logger.error(f"{what} reached the Bloch boundary at t={t_hit:.6g}")
        raise IntegrationError(f"{what} reached the Bloch boundary at t={t_hit:.6g} "
                               f"before t={t_span:.6g}")


def solve_flow(x0: ArrayLike, t_span: float, params: ModelParams,
               tol: Optional[float] = None, t_eval: Optional[np.ndarray] = None):
    """Raw solve_ivp solution with dense output (negative t_span integrates backwards)"""
    tol = tol or settings.INTEGRATOR_TOL
    y0 = _array(x0)
    h_cl(y0, params)
    sol = solve_ivp(
        _flow(params), (0.0, t_span), y0, method='DOP853', rtol=tol, atol=tol,
        dense_output=True, t_eval=t_eval, events=_boundary_event
    )
    _check(sol, t_span, "Integration")
    return sol


def integrate(x0: ArrayLike, t_span: float, params: ModelParams, tol: Optional[float] = None,
              n_samples: Optional[int] = None, t_eval: Optional[np.ndarray] = None) -> Trajectory:
    """Integrate Hamilton's equations; samples at t_eval, n_samples equal steps, or solver steps"""
    if t_eval is None and n_samples is not None:
        t_eval = np.linspace(0.0, t_span, n_samples)
    energy = h_cl(x0, params)
    if t_span == 0:
        points = _array(x0)[None, :]
        return Trajectory(times=np.zeros(1), points=points, energy=energy)
    sol = solve_flow(x0, t_span, params, tol=tol, t_eval=t_eval)
    points = sol.y.T
    drift = float(np.max(np.abs(h_cl(points, params) - energy)))
    logger.debug(f"Integrated t={t_span:.4g} in {sol.t.size} samples, max drift {drift:.2e}")
    return Trajectory(
        times=sol.t,
        points=points,
        energy=energy,
        n_steps=int(sol.nfev),
        max_energy_drift=drift
    )


def integrate_tangent(x0: ArrayLike, t_span: float, params: ModelParams,
                      tol: Optional[float] = None) -> TangentState:
    """Co-integrate the flow and its 4x4 fundamental matrix"""
    y0 = _array(x0)
    if t_span == 0:
        return TangentState(point=PhasePoint.from_array(y0), matrix=np.eye(4), time=0.0)
    tol = tol or settings.INTEGRATOR_TOL
    flow = _flow(params)

    def rhs(t, y):
        x = y[:4]
        M = y[4:].reshape(4, 4)
        return np.concatenate([flow(t, x), (jacobian(x, params) @ M).ravel()])

    h_cl(y0, params)
    sol = solve_ivp(
        rhs, (0.0, t_span), np.concatenate([y0, np.eye(4).ravel()]),
        method='DOP853', rtol=tol, atol=tol, events=_boundary_event
    )
    _check(sol, t_span, "Tangent integration")
    end = sol.y[:, -1]
    return TangentState(
        point=PhasePoint.from_array(end[:4]),
        matrix=end[4:].reshape(4, 4),
        time=float(sol.t[-1])
    )


def max_lyapunov(x0: ArrayLike, t_total: float, renorm_dt: float, params: ModelParams,
                 tol: float = 1e-10, seed: int = 0) -> LyapunovEstimate:
    """Benettin estimate: grow a tangent vector, renormalize every renorm_dt"""
    if renorm_dt <= 0 or t_total < renorm_dt:
        raise DomainError("Need 0 < renorm_dt <= t_total")
    flow = _flow(params)

    def rhs(t, y):
        return np.concatenate([flow(t, y[:4]), jacobian(y[:4], params) @ y[4:]])

    rng = np.random.Generator(np.random.Philox(seed))
    v = rng.standard_normal(4)
    v /= np.linalg.norm(v)
    x = _array(x0)
    h_cl(x, params)

    n_segments = int(round(t_total / renorm_dt))
    times = renorm_dt * np.arange(1, n_segments + 1)
    log_growth = 0.0
    running = np.empty(n_segments)
    for i in range(n_segments):
        sol = solve_ivp(rhs, (0.0, renorm_dt), np.concatenate([x, v]),
                        method='DOP853', rtol=tol, atol=tol, events=_boundary_event)
        _check(sol, renorm_dt, "Lyapunov integration")
        x = sol.y[:4, -1]
        v = sol.y[4:, -1]
        norm = np.linalg.norm(v)
        log_growth += math.log(norm)
        v = v / norm
        running[i] = log_growth / times[i]

    value = float(running[-1])
    decade = max(0, int(math.ceil(n_segments / 10)) - 1)
    drift = abs(value - running[decade])
    converged = bool(drift <= max(0.1 * abs(value), 1e-3))
    if not converged:
        logger.warning(f"Lyapunov estimate {value:.4g} drifted by {drift:.3g} over the last decade")
    return LyapunovEstimate(value=value, converged=converged, times=times, running=running)
