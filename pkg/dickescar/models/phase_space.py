"""Classical phase-space types"""

from typing import Optional, Sequence

import numpy as np
from pydantic import Field, model_validator

from .base import FrozenModel

BLOCH_RADIUS_SQ = 4.0


class PhasePoint(FrozenModel):
    """Point x = (q, p; Q, P) of the four-dimensional phase space"""
    q: float
    p: float
    Q: float
    P: float

    @model_validator(mode='after')
    def check_bloch_disk(self):
        if self.Q ** 2 + self.P ** 2 > BLOCH_RADIUS_SQ + 1e-12:
            raise ValueError(f"Q^2+P^2={self.Q ** 2 + self.P ** 2:.6g} exceeds 4")
        return self

    def as_array(self) -> np.ndarray:
        return np.array([self.q, self.p, self.Q, self.P], dtype=float)

    @classmethod
    def from_array(cls, x: Sequence[float]) -> "PhasePoint":
        return cls(q=float(x[0]), p=float(x[1]), Q=float(x[2]), P=float(x[3]))


class Trajectory(FrozenModel):
    """Samples of a classical trajectory"""
    times: np.ndarray
    points: np.ndarray
    energy: float
    n_steps: int = 0
    max_energy_drift: float = 0.0


class TangentState(FrozenModel):
    """End point of a trajectory and its 4x4 fundamental matrix"""
    point: PhasePoint
    matrix: np.ndarray
    time: float


class LyapunovEstimate(FrozenModel):
    """Benettin estimate of the largest Lyapunov exponent"""
    value: float
    converged: bool
    times: np.ndarray
    running: np.ndarray


class ShellSample(FrozenModel):
    """Weighted points on the energy shell h_cl(x) = eps.

    Points from the same proposal draw share a `draws` index; the shell
    volume estimate is (2 pi hbar_eff)^2 nu(eps).
    """
    eps: float
    points: np.ndarray
    weights: np.ndarray
    draws: np.ndarray
    n_draws: int = Field(..., ge=1)
    box_volume: float
    volume: float
    volume_error: float
    seed: int
    scheme: str = "root"
    j: Optional[float] = None

    @property
    def size(self) -> int:
        return int(self.weights.size)
