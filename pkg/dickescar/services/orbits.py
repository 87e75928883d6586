"""Periodic orbit hunting: Husimi peaks, shell lifts, returns and monodromy Newton refinement"""

import logging
import math
import multiprocessing
from concurrent.futures import ProcessPoolExecutor
from functools import partial
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.ndimage import maximum_filter
from scipy.optimize import minimize_scalar
from scipy.spatial.distance import cdist

from dickescar.errors import DickeScarError, DomainError, NewtonDivergenceError, SingularNewtonError
from dickescar.models import (
    HuntFailure, HusimiGrid, ModelParams, OrbitCandidate, OrbitCatalog, PeriodicOrbit, PhasePoint,
    StateVector
)
from dickescar.models.phase_space import BLOCH_RADIUS_SQ
from dickescar.services import telemetry
from dickescar.services.classical import (
    eom, gradient, h_cl, integrate_tangent, solve_flow, symplectic_defect
)
from dickescar.services.coherent import HusimiEvaluator, HusimiSource
from dickescar.services.shell import p_max, solve_q

logger = logging.getLogger(__name__)

# Closure accepted at the integrator noise floor when Newton stagnates
NOISE_FLOOR = 1e-8
SINGULAR_RCOND = 1e-12
DEDUPE_EPS_TOL = 1e-6
DEDUPE_PERIOD_TOL = 1e-4
DEDUPE_DISTANCE_TOL = 1e-4

SourceLike = Union[StateVector, HusimiSource]


def _as_source(state: SourceLike) -> HusimiSource:
    if isinstance(state, StateVector):
        return HusimiEvaluator.for_state(state)
    return state


def find_husimi_peaks(grid: HusimiGrid, threshold_frac: float = 0.3,
                      radius: int = 3) -> List[Tuple[float, float]]:
    """Local maxima above threshold_frac * max, suppressed within `radius` cells, highest first"""
    values = np.where(np.isfinite(grid.values), grid.values, -np.inf)
    if not np.any(np.isfinite(values)):
        return []
    top = np.max(values)
    if top <= 0:
        return []
    local = maximum_filter(values, size=2 * radius + 1, mode='constant', cval=-np.inf)
    iP, iQ = np.nonzero((values == local) & (values >= threshold_frac * top))
    order = np.argsort(-values[iP, iQ], kind='stable')

    kept: List[Tuple[int, int]] = []
    for idx in order:
        cell = (iP[idx], iQ[idx])
        if all(max(abs(cell[0] - k[0]), abs(cell[1] - k[1])) > radius for k in kept):
            kept.append(cell)
    return [(float(grid.Q_axis[c[1]]), float(grid.P_axis[c[0]])) for c in kept]


def lift_to_shell(Qp: Tuple[float, float], eps: float, state: SourceLike, params: ModelParams,
                  n_p: int = 401) -> List[PhasePoint]:
    """Husimi maximizer on each q-branch of the shell above a fixed (Q, P)"""
    Q, P = Qp
    if Q ** 2 + P ** 2 >= BLOCH_RADIUS_SQ:
        raise DomainError(f"(Q, P)=({Q}, {P}) is not inside the Bloch disk")
    source = _as_source(state)
    pm = p_max(eps, params)
    p = np.linspace(-pm, pm, n_p)
    q_a, q_b, disc = solve_q(p, Q, P, eps, params)
    ok = disc > 0
    if not np.any(ok):
        raise DomainError(f"No admissible p above (Q, P)=({Q:.4f}, {P:.4f}) at eps={eps}")

    def branch_q(p_value: float, upper: bool) -> Optional[float]:
        a, b, d = solve_q(np.array([p_value]), Q, P, eps, params)
        if d[0] < 0:
            return None
        return float(max(a[0], b[0]) if upper else min(a[0], b[0]))

    lifted = []
    for upper in (True, False):
        q = np.where(upper, np.maximum(q_a, q_b), np.minimum(q_a, q_b))[ok]
        ps = p[ok]
        points = np.column_stack([q, ps, np.full(q.size, Q), np.full(q.size, P)])
        values = source.husimi(points)
        best = int(np.argmax(values))
        lo = ps[max(best - 1, 0)]
        hi = ps[min(best + 1, ps.size - 1)]
        p_best = ps[best]
        if hi > lo:
            def negative(pv):
                qv = branch_q(pv, upper)
                if qv is None:
                    return 0.0
                return -float(source.husimi(np.array([[qv, pv, Q, P]]))[0])

            res = minimize_scalar(negative, bounds=(lo, hi), method='bounded',
                                  options={'xatol': 1e-10})
            if res.success and -res.fun >= values[best]:
                p_best = float(res.x)
        q_best = branch_q(p_best, upper)
        if q_best is None:
            q_best, p_best = float(q[best]), float(ps[best])
        lifted.append(PhasePoint(q=q_best, p=float(p_best), Q=Q, P=P))

    if np.allclose(lifted[0].as_array(), lifted[1].as_array(), atol=1e-12):
        return lifted[:1]
    return lifted


def detect_return(x0: PhasePoint, T_max: float, candidate_tol: float, params: ModelParams,
                  t_min: Optional[float] = None, label: str = "") -> Optional[OrbitCandidate]:
    """First local minimum of |x(t) - x0| after t_min with residual below candidate_tol"""
    t_min = 0.5 * 2 * math.pi / params.omega if t_min is None else t_min
    if T_max <= t_min:
        raise DomainError(f"T_max={T_max} must exceed t_min={t_min}")
    start = x0.as_array()
    sol = solve_flow(start, T_max, params)
    n = max(2000, int(T_max / 0.005))
    t = np.linspace(0.0, T_max, n)
    dist = np.sum((sol.sol(t).T - start) ** 2, axis=1)

    def distance(tv: float) -> float:
        return float(np.sum((sol.sol(tv) - start) ** 2))

    interior = np.arange(1, n - 1)
    minima = interior[(dist[interior] <= dist[interior - 1]) & (dist[interior] <= dist[interior + 1])]
    for i in minima:
        if t[i] < t_min or dist[i] > 4 * candidate_tol ** 2:
            continue
        res = minimize_scalar(distance, bounds=(t[i - 1], t[i + 1]), method='bounded',
                              options={'xatol': 1e-12})
        residual = math.sqrt(min(res.fun, dist[i]))
        period = float(res.x) if res.fun <= dist[i] else float(t[i])
        if residual < candidate_tol:
            logger.debug(f"Return at T={period:.6f} with residual {residual:.3e}")
            return OrbitCandidate(seed=x0, period=period, residual=residual, label=label)
    return None


def lyapunov_from_monodromy(M: np.ndarray, period: float) -> float:
    growth = float(np.max(np.abs(np.linalg.eigvals(M))))
    return max(0.0, math.log(growth) / period)


def orbit_lyapunov(orbit: PeriodicOrbit) -> float:
    """ln(max |eig M|) / T"""
    return lyapunov_from_monodromy(orbit.monodromy, orbit.period)


def orbit_from_point(x0: PhasePoint, period: float, params: ModelParams, label: str = "",
                     orbit_id: str = "", iterations: int = 0) -> PeriodicOrbit:
    """PeriodicOrbit from a point known to be periodic (no Newton)"""
    tangent = integrate_tangent(x0, period, params)
    closure = float(np.linalg.norm(tangent.point.as_array() - x0.as_array()))
    return PeriodicOrbit(
        x0=x0,
        period=period,
        energy=h_cl(x0, params),
        monodromy=tangent.matrix,
        lyapunov=lyapunov_from_monodromy(tangent.matrix, period),
        closure_residual=closure,
        params=params,
        label=label,
        orbit_id=orbit_id,
        iterations=iterations
    )


def _keep_inside(x: np.ndarray, step: np.ndarray) -> np.ndarray:
    scale = 1.0
    for _ in range(30):
        trial = x + scale * step
        if trial[2] ** 2 + trial[3] ** 2 < BLOCH_RADIUS_SQ - 1e-6:
            return trial
        scale /= 2
    raise NewtonDivergenceError("Newton step keeps leaving the Bloch disk")


def monodromy_refine(cand: OrbitCandidate, params: ModelParams, tol: float = 1e-10,
                     max_iter: int = 50, eps_target: Optional[float] = None) -> PeriodicOrbit:
    """Newton iteration on (x0, T) with energy and phase constraints"""
    x = cand.seed.as_array()
    T = cand.period
    eps_target = h_cl(x, params) if eps_target is None else eps_target
    norms: List[float] = []
    growth = 0
    last_step = math.inf

    for iteration in range(1, max_iter + 1):
        tangent = integrate_tangent(x, T, params)
        F = tangent.point.as_array() - x
        energy_gap = eps_target - h_cl(x, params)
        norm = float(np.linalg.norm(F))
        logger.debug(f"Newton {iteration}: |F|={norm:.3e}, T={T:.10f}, dE={energy_gap:.2e}")

        stalled = norm < NOISE_FLOOR and last_step < NOISE_FLOOR / 10
        if (norm < tol or stalled) and abs(energy_gap) < max(tol, 1e-9):
            break

        if norms and norm > norms[-1] and norm > NOISE_FLOOR:
            growth += 1
            if growth >= 2:
                raise NewtonDivergenceError(
                    f"Newton residual grew twice in a row ({norms[-2]:.3e} -> {norms[-1]:.3e} -> {norm:.3e})"
                )
        else:
            growth = 0
        norms.append(norm)

        A = np.zeros((6, 5))
        A[:4, :4] = tangent.matrix - np.eye(4)
        A[:4, 4] = eom(tangent.point.as_array(), params)
        A[4, :4] = gradient(x, params)
        A[5, :4] = eom(x, params)
        rhs = np.concatenate([-F, [energy_gap, 0.0]])
        singular = np.linalg.svd(A, compute_uv=False)
        if singular[-1] < SINGULAR_RCOND * singular[0]:
            raise SingularNewtonError(
                f"Newton system is rank deficient (sigma_min/sigma_max={singular[-1] / singular[0]:.2e})"
            )
        delta, *_ = np.linalg.lstsq(A, rhs, rcond=None)
        x = _keep_inside(x, delta[:4])
        T = T + delta[4]
        last_step = float(np.linalg.norm(delta))
        if T <= 0:
            raise NewtonDivergenceError(f"Period became non-positive (T={T:.4g})")
    else:
        raise NewtonDivergenceError(f"No convergence after {max_iter} iterations (|F|={norm:.3e})")

    x0 = PhasePoint.from_array(x)
    # Return detection can lock onto the second repetition
    half = solve_flow(x, T / 2, params).y[:, -1]
    if np.linalg.norm(half - x) < max(tol, NOISE_FLOOR) * 10:
        logger.info(f"Orbit closes at T/2={T / 2:.6f}; reporting the primitive period")
        T = T / 2

    orbit = orbit_from_point(x0, T, params, label=cand.label, iterations=iteration)
    logger.info(f"Refined orbit: T={orbit.period:.6f}, lambda={orbit.lyapunov:.4f}, "
                f"closure {orbit.closure_residual:.2e} after {iteration} iterations")
    return orbit


def mirror_orbit(orbit: PeriodicOrbit) -> PeriodicOrbit:
    """Image under (q, Q) -> (-q, -Q); traversed in reversed time, same T and lambda"""
    q, p, Q, P = orbit.x0.as_array()
    x0 = PhasePoint(q=-q, p=p, Q=-Q, P=P)
    if orbit.orbit_id.endswith("-mirror"):
        orbit_id = orbit.orbit_id[:-len("-mirror")]
    else:
        orbit_id = f"{orbit.orbit_id}-mirror" if orbit.orbit_id else ""
    return orbit_from_point(x0, orbit.period, orbit.params, label=orbit.label,
                            orbit_id=orbit_id, iterations=orbit.iterations)


def sample_orbit(orbit: PeriodicOrbit, n: int) -> np.ndarray:
    """n points at equal time spacing over one period, starting at x0"""
    times = orbit.period * np.arange(n) / n
    sol = solve_flow(orbit.x0, orbit.period, orbit.params, t_eval=times)
    return sol.y.T


def orbit_distance(a: PeriodicOrbit, b: PeriodicOrbit, n: int = 256) -> float:
    """Symmetric Hausdorff distance between the two closed curves"""
    return max(_directed_distance(a, b, n), _directed_distance(b, a, n))


def _directed_distance(a: PeriodicOrbit, b: PeriodicOrbit, n: int) -> float:
    points_a = sample_orbit(a, n)
    sol_b = solve_flow(b.x0, b.period, b.params)
    times_b = b.period * np.arange(n + 1) / n
    nodes_b = sol_b.sol(times_b).T
    d = cdist(points_a, nodes_b)
    nearest = np.argmin(d, axis=1)
    best = d[np.arange(n), nearest]

    worst = 0.0
    for i in np.argsort(-best):
        if best[i] <= worst:
            break
        k = nearest[i]
        lo = times_b[max(k - 1, 0)]
        hi = times_b[min(k + 1, n)]
        res = minimize_scalar(lambda t: float(np.linalg.norm(sol_b.sol(t) - points_a[i])),
                              bounds=(lo, hi), method='bounded', options={'xatol': 1e-12})
        worst = max(worst, min(float(res.fun), float(best[i])))
    return worst


def validate_orbit(orbit: PeriodicOrbit, closure_tol: float = 1e-8) -> List[str]:
    """Violated PeriodicOrbit invariants (empty when the orbit is sound)"""
    problems = []
    if orbit.closure_residual >= closure_tol:
        problems.append(f"closure residual {orbit.closure_residual:.2e} >= {closure_tol:g}")
    defect = symplectic_defect(orbit.monodromy)
    if defect > 1e-6:
        problems.append(f"monodromy symplectic defect {defect:.2e}")
    eig = np.linalg.eigvals(orbit.monodromy)
    if np.sum(np.abs(eig - 1.0) < 1e-4) < 2:
        problems.append("monodromy lacks a unit eigenvalue pair")
    if orbit.lyapunov < 0:
        problems.append("negative Lyapunov exponent")
    return problems


def same_orbit(a: PeriodicOrbit, b: PeriodicOrbit) -> bool:
    if abs(a.energy - b.energy) > DEDUPE_EPS_TOL or abs(a.period - b.period) > DEDUPE_PERIOD_TOL:
        return False
    return orbit_distance(a, b) < DEDUPE_DISTANCE_TOL


def add_to_catalog(catalog: OrbitCatalog, orbit: PeriodicOrbit) -> Tuple[OrbitCatalog, bool]:
    """Catalog with `orbit` appended unless an equivalent orbit is already present"""
    for known in catalog.orbits:
        if same_orbit(known, orbit):
            return catalog, False
    orbit_id = orbit.orbit_id or f"O{len(catalog.orbits) + 1}"
    orbit = orbit.model_copy(update={'orbit_id': orbit_id})
    return OrbitCatalog(orbits=[*catalog.orbits, orbit]), True


def _process_seed(index: int, seed: PhasePoint, eps: float, params: ModelParams, t_max: float,
                  candidate_tol: float, newton_tol: float, max_iter: int, label: str):
    stage = "detect"
    try:
        cand = detect_return(seed, t_max, candidate_tol, params, label=label)
        if cand is None:
            return HuntFailure(seed_index=index, stage=stage, code="NO_RETURN",
                               message=f"No return below T_max={t_max}", seed=seed.as_array().tolist())
        stage = "refine"
        return monodromy_refine(cand, params, tol=newton_tol, max_iter=max_iter, eps_target=eps)
    except DickeScarError as e:
        return HuntFailure(seed_index=index, stage=stage, code=e.code, message=e.message,
                           seed=seed.as_array().tolist())


def _process_seed_item(item: Tuple[int, PhasePoint], **kwargs):
    index, seed = item
    return _process_seed(index, seed, **kwargs)


def hunt(state: SourceLike, grid: HusimiGrid, eps: float, params: ModelParams,
         t_max: float = 30.0, candidate_tol: float = 0.1, newton_tol: float = 1e-10,
         max_iter: int = 50, threshold_frac: float = 0.3, peak_radius: int = 3,
         max_peaks: int = 6, threads: int = 1, label: str = "",
         include_mirrors: bool = False) -> Tuple[OrbitCatalog, List[HuntFailure]]:
    """Peaks of a projected moment -> shell lifts -> returns -> refined, de-duplicated orbits"""
    label = label or getattr(state, 'label', '')
    peaks = find_husimi_peaks(grid, threshold_frac, peak_radius)[:max_peaks]
    logger.info(f"Hunting orbits for {label or 'state'} at eps={eps:.4f}: {len(peaks)} peaks")

    seeds: List[PhasePoint] = []
    failures: List[HuntFailure] = []
    for Qp in peaks:
        try:
            seeds.extend(lift_to_shell(Qp, eps, state, params))
        except DickeScarError as e:
            failures.append(HuntFailure(seed_index=-1, stage="lift", code=e.code,
                                        message=f"{e.message} at (Q, P)={Qp}"))

    work = partial(_process_seed_item, eps=eps, params=params, t_max=t_max,
                   candidate_tol=candidate_tol, newton_tol=newton_tol, max_iter=max_iter, label=label)
    items = list(enumerate(seeds))
    if threads <= 1 or len(items) <= 1:
        outcomes = [work(item) for item in items]
    else:
        # spawn: the caller may already be a worker thread
        context = multiprocessing.get_context("spawn")
        with ProcessPoolExecutor(max_workers=min(threads, len(items)), mp_context=context) as pool:
            outcomes = list(pool.map(work, items))

    catalog = OrbitCatalog()
    for outcome in outcomes:
        if isinstance(outcome, HuntFailure):
            failures.append(outcome)
            continue
        telemetry.NEWTON_ITERATIONS.inc(outcome.iterations)
        candidates = [outcome, mirror_orbit(outcome)] if include_mirrors else [outcome]
        for orbit in candidates:
            catalog, added = add_to_catalog(catalog, orbit.model_copy(update={'orbit_id': ''}))
            if added:
                telemetry.ORBITS_FOUND.inc()

    for failure in failures:
        telemetry.ORBIT_FAILURES.labels(stage=failure.stage).inc()
    if not catalog.orbits:
        logger.warning(f"No orbit found below T_max={t_max} for {label or 'state'}")
    return catalog, failures
