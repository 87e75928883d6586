"""Energy-shell Monte Carlo and the semiclassical density of states"""

import logging
import math
from typing import Callable, Optional, Tuple

import numpy as np
from scipy import integrate

from dickescar.config import get_settings
from dickescar.errors import DomainError, EmptyWindowError
from dickescar.models import ModelParams, ShellSample
from dickescar.services.classical import ground_energy

logger = logging.getLogger(__name__)
settings = get_settings()

DISK_AREA = 4 * math.pi
TANGENCY_TOL = 1e-12
SCHEMES = ("root", "angle")


def shard_rng(seed: int, shard: int) -> np.random.Generator:
    """Independent Philox stream for one shard of a seeded run"""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, shard])))


def _shard_sizes(n: int, shard_size: int):
    full, rest = divmod(n, shard_size)
    return [shard_size] * full + ([rest] if rest else [])


def _uniform_disk(rng: np.random.Generator, size: int) -> Tuple[np.ndarray, np.ndarray]:
    radius = 2.0 * np.sqrt(rng.random(size))
    phi = 2 * np.pi * rng.random(size)
    return radius * np.cos(phi), radius * np.sin(phi)


def shell_coefficients(p, Q, P, params: ModelParams):
    """(b, c) of h_cl = (omega/2) q^2 + b q + c at fixed (p, Q, P)"""
    r2 = Q ** 2 + P ** 2
    s = np.sqrt(np.clip(1.0 - r2 / 4, 0.0, None))
    b = 2 * params.gamma * Q * s
    c = (params.omega / 2) * p ** 2 + (params.omega0 / 2) * r2 - params.omega0
    return b, c


def solve_q(p, Q, P, eps: float, params: ModelParams):
    """Both q roots of h_cl = eps and the discriminant b^2 - 2 omega (c - eps)"""
    b, c = shell_coefficients(p, Q, P, params)
    disc = b ** 2 - 2 * params.omega * (c - eps)
    root = np.sqrt(np.clip(disc, 0.0, None))
    # Citardauq form for the small root
    t = -(b + np.copysign(root, b))
    with np.errstate(divide='ignore', invalid='ignore'):
        q_big = t / params.omega
        q_small = np.where(t != 0, 2 * (c - eps) / t, 0.0)
    return q_big, q_small, disc


def p_max(eps: float, params: ModelParams) -> float:
    """Largest |p| on the shell"""
    return math.sqrt(2 * max(eps - ground_energy(params), 0.0) / params.omega)


def max_field_action(eps: float, params: ModelParams, n_Q: int = 4001) -> float:
    """Largest (q^2 + p^2)/2 on the shell; times j it is the classical photon number.

    Above each (Q, P) the shell is a circle in (q, p) centred at (-b/omega, 0);
    the farthest point from the origin lies at P = 0.
    """
    if eps < ground_energy(params):
        raise DomainError(f"eps={eps} lies below the ground energy {ground_energy(params):.6f}")
    Q = np.linspace(-2.0, 2.0, n_Q)
    b, _ = shell_coefficients(0.0, Q, 0.0, params)
    bosonic = eps - (params.omega0 / 2) * Q ** 2 + params.omega0 + b ** 2 / (2 * params.omega)
    ok = bosonic > 0
    if not np.any(ok):
        return 0.0
    reach = np.abs(b[ok]) / params.omega + np.sqrt(2 * bosonic[ok] / params.omega)
    return float(np.max(reach) ** 2 / 2)


def _root_shard(rng, size, eps, params, pm):
    p = pm * (2 * rng.random(size) - 1)
    Q, P = _uniform_disk(rng, size)
    q_big, q_small, disc = solve_q(p, Q, P, eps, params)
    ok = disc > TANGENCY_TOL
    weight = np.zeros(size)
    weight[ok] = 1.0 / np.sqrt(disc[ok])
    idx = np.flatnonzero(ok)
    points = np.concatenate([
        np.column_stack([q_big[ok], p[ok], Q[ok], P[ok]]),
        np.column_stack([q_small[ok], p[ok], Q[ok], P[ok]]),
    ])
    weights = np.concatenate([weight[ok], weight[ok]])
    draws = np.concatenate([idx, idx])
    order = np.argsort(draws, kind='stable')
    return points[order], weights[order], draws[order], 2 * weight


def _angle_shard(rng, size, eps, params):
    Q, P = _uniform_disk(rng, size)
    theta = 2 * np.pi * rng.random(size)
    r2 = Q ** 2 + P ** 2
    b, _ = shell_coefficients(0.0, Q, P, params)
    bosonic = eps - (params.omega0 / 2) * r2 + params.omega0 + b ** 2 / (2 * params.omega)
    ok = bosonic > 0
    radius = np.sqrt(2 * bosonic[ok] / params.omega)
    points = np.column_stack([
        -b[ok] / params.omega + radius * np.cos(theta[ok]),
        radius * np.sin(theta[ok]),
        Q[ok],
        P[ok],
    ])
    # dq dp delta(h - eps) on the circle is dtheta / omega
    per_draw = np.where(ok, 2 * np.pi / params.omega, 0.0)
    return points, per_draw[ok], np.flatnonzero(ok), per_draw


def sample_energy_shell(eps: float, n: int, params: ModelParams, seed: int = 0,
                        scheme: str = "root", shard_size: Optional[int] = None,
                        box_scale: float = 1.0) -> ShellSample:
    """Weighted points realizing dx delta(h_cl(x) - eps).

    `root` draws (p, Q, P) uniformly and solves h_cl = eps for q; `angle`
    draws (Q, P) and an angle on the bosonic circle of the shell.
    """
    if n < 1:
        raise DomainError(f"Need at least one draw, got n={n}")
    if scheme not in SCHEMES:
        raise DomainError(f"Unknown shell scheme {scheme!r}")
    eps_min = ground_energy(params)
    if eps < eps_min:
        raise DomainError(f"eps={eps} lies below the ground energy {eps_min:.6f}")
    shard_size = shard_size or settings.SHELL_SHARD_SIZE

    if box_scale < 1.0:
        raise DomainError(f"box_scale must be >= 1 so the box covers the shell, got {box_scale}")
    pm = p_max(eps, params) * box_scale
    box_volume = 2 * pm * DISK_AREA if scheme == "root" else DISK_AREA
    chunks = []
    offset = 0
    for shard, size in enumerate(_shard_sizes(n, shard_size)):
        rng = shard_rng(seed, shard)
        if scheme == "root":
            chunk = _root_shard(rng, size, eps, params, pm)
        else:
            chunk = _angle_shard(rng, size, eps, params)
        points, weights, draws, per_draw = chunk
        chunks.append((points, weights, draws + offset, per_draw))
        offset += size

    points = np.concatenate([c[0] for c in chunks])
    weights = np.concatenate([c[1] for c in chunks])
    draws = np.concatenate([c[2] for c in chunks])
    per_draw = np.concatenate([c[3] for c in chunks])
    if weights.size == 0:
        raise EmptyWindowError(f"No shell points found at eps={eps} in {n} draws")

    volume = box_volume * float(np.mean(per_draw))
    volume_error = box_volume * float(np.std(per_draw, ddof=1)) / math.sqrt(n) if n > 1 else 0.0
    logger.debug(f"Shell eps={eps:.4f} ({scheme}): {weights.size} points from {n} draws, "
                 f"volume {volume:.5g} +- {volume_error:.2g}")
    return ShellSample(
        eps=eps,
        points=points,
        weights=weights,
        draws=draws,
        n_draws=n,
        box_volume=box_volume,
        volume=volume,
        volume_error=volume_error,
        seed=seed,
        scheme=scheme,
        j=params.j
    )


def sample_average(values: np.ndarray, sample: ShellSample) -> Tuple[float, float]:
    """Weighted shell mean of per-point values, with the ratio-estimator standard error"""
    values = np.asarray(values, dtype=float)
    total_w = float(np.sum(sample.weights))
    weighted = sample.weights * values
    mean = float(np.sum(weighted)) / total_w
    # Draws are the independent units; their roots share one proposal
    per_draw_f = np.bincount(sample.draws, weights=weighted, minlength=sample.n_draws)
    per_draw_w = np.bincount(sample.draws, weights=sample.weights, minlength=sample.n_draws)
    error = math.sqrt(float(np.sum((per_draw_f - mean * per_draw_w) ** 2))) / total_w
    return mean, error


def shell_average(f: Callable[[np.ndarray], np.ndarray], eps: float, n: int,
                  params: ModelParams, seed: int = 0, scheme: str = "root",
                  sample: Optional[ShellSample] = None) -> Tuple[float, float]:
    """<f>_eps over the energy shell; f maps an (S, 4) array of points to S values"""
    sample = sample or sample_energy_shell(eps, n, params, seed=seed, scheme=scheme)
    return sample_average(f(sample.points), sample)


def dos_branch(eps: float, params: ModelParams) -> str:
    """Which piece of the closed-form DOS applies at eps"""
    if eps < ground_energy(params):
        raise DomainError(f"eps={eps} lies below the ground energy {ground_energy(params):.6f}")
    if eps >= params.omega0:
        return "plateau"
    if params.superradiant and eps <= -params.omega0:
        return "lower"
    return "middle"


def _arccos_kernel(eps: float, params: ModelParams) -> Callable[[float], float]:
    ratio = 2 * params.gamma_c ** 2 / params.gamma ** 2
    e = eps / params.omega0

    def f(y: float) -> float:
        denom = 1.0 - y * y
        if denom <= 0:
            return 0.0
        arg = ratio * (y - e) / denom
        return math.acos(math.sqrt(min(max(arg, 0.0), 1.0)))

    return f


def _y_bounds(eps: float, params: ModelParams) -> Tuple[float, float]:
    g = params.gamma_c / params.gamma
    eps0 = -(params.omega0 / 2) * (g ** 2 + 1 / g ** 2)
    root = math.sqrt(max(2 * (eps - eps0) / params.omega0, 0.0))
    return -g * (g + root), -g * (g - root)


def _endpoint_quad(f: Callable[[float], float], lo: float, hi: float) -> float:
    """Integral of f over [lo, hi] with square-root behaviour at both ends"""
    if hi <= lo:
        return 0.0
    mid = (lo + hi) / 2
    half = math.sqrt(mid - lo)
    left, _ = integrate.quad(lambda u: 2 * u * f(lo + u * u), 0.0, half, limit=200)
    right, _ = integrate.quad(lambda u: 2 * u * f(hi - u * u), 0.0, half, limit=200)
    return left + right


def semiclassical_dos(eps: float, params: ModelParams) -> float:
    """nu(eps): shell volume divided by the Planck cell (2 pi / j)^2"""
    branch = dos_branch(eps, params)
    scale = 2 * params.j ** 2 / params.omega
    if branch == "plateau":
        return scale
    e = eps / params.omega0
    if params.gamma == 0:
        return scale * (1 + e) / 2

    f = _arccos_kernel(eps, params)
    y_minus, y_plus = _y_bounds(eps, params)
    upper = min(y_plus, 1.0)
    if branch == "lower":
        value = _endpoint_quad(f, max(y_minus, -1.0), upper) / math.pi
    else:
        value = (1 + e) / 2 + _endpoint_quad(f, e, upper) / math.pi
    return scale * value


def shell_volume(eps: float, params: ModelParams) -> float:
    """Closed-form int dx delta(h_cl - eps) = (2 pi hbar_eff)^2 nu(eps)"""
    return (2 * math.pi * params.hbar_eff) ** 2 * semiclassical_dos(eps, params)


def integrated_dos(eps_a: float, eps_b: float, params: ModelParams) -> float:
    """Semiclassical level count between two energies"""
    if eps_b < eps_a:
        return -integrated_dos(eps_b, eps_a, params)
    eps_a = max(eps_a, ground_energy(params))
    if eps_b <= eps_a:
        return 0.0
    seams = [s for s in (-params.omega0, params.omega0) if eps_a < s < eps_b]
    # nu is a density per unit eps
    value, _ = integrate.quad(semiclassical_dos, eps_a, eps_b, args=(params,),
                              points=seams or None, limit=200)
    return value
