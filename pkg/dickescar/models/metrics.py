"""Localization and scarring result models"""

from typing import Dict, Optional, Tuple

import numpy as np
from pydantic import Field, model_validator

from .base import FrozenModel


class GridSpec(FrozenModel):
    """Cell-centred (Q, P) grid, by default covering the whole Bloch disk"""
    n_Q: int = Field(101, ge=3)
    n_P: int = Field(101, ge=3)
    Q_min: float = -2.0
    Q_max: float = 2.0
    P_min: float = -2.0
    P_max: float = 2.0

    @model_validator(mode='after')
    def check_bounds(self):
        if self.Q_max <= self.Q_min or self.P_max <= self.P_min:
            raise ValueError("Grid bounds must be increasing")
        return self

    def axes(self) -> Tuple[np.ndarray, np.ndarray]:
        dQ = (self.Q_max - self.Q_min) / self.n_Q
        dP = (self.P_max - self.P_min) / self.n_P
        Q_axis = self.Q_min + dQ * (np.arange(self.n_Q) + 0.5)
        P_axis = self.P_min + dP * (np.arange(self.n_P) + 0.5)
        return Q_axis, P_axis

    @property
    def cell_area(self) -> float:
        return ((self.Q_max - self.Q_min) / self.n_Q) * ((self.P_max - self.P_min) / self.n_P)


class QuadSpec(FrozenModel):
    """Angular quadrature along each bosonic circle of the shell"""
    n_theta: int = Field(64, ge=8)
    rel_tol: float = Field(1e-3, gt=0)


class HusimiGrid(FrozenModel):
    """Projected Husimi moment over the (Q, P) plane.

    values[iP, iQ]; NaN marks cells outside the shell projection or the disk.
    """
    Q_axis: np.ndarray
    P_axis: np.ndarray
    values: np.ndarray
    unconverged: np.ndarray
    label: str = ""
    alpha: float = 1.0
    eps: float = 0.0
    n_nodes: int = 0

    @property
    def empty(self) -> np.ndarray:
        return np.isnan(self.values)

    def normalized(self) -> np.ndarray:
        """Values scaled to unit maximum (display only)"""
        peak = np.nanmax(self.values) if np.any(~self.empty) else 0.0
        if peak <= 0:
            return self.values.copy()
        return self.values / peak

    def contrast(self) -> float:
        """max / mean over non-empty cells"""
        inside = self.values[~self.empty]
        return float(inside.max() / inside.mean())


class OccupationCurve(FrozenModel):
    """Renyi occupations and localization measure of one state vs alpha"""
    label: str
    eps: float
    alphas: np.ndarray
    occupations: np.ndarray
    occupation_errors: np.ndarray
    lambdas: np.ndarray
    lambda_errors: np.ndarray
    extra: Dict[str, float] = Field(default_factory=dict)

    def at(self, alpha: float) -> Tuple[float, float]:
        idx = int(np.argmin(np.abs(self.alphas - alpha)))
        return float(self.lambdas[idx]), float(self.lambda_errors[idx])


class ScarMeasurement(FrozenModel):
    """Scarring measure P_k(O) of one state against one orbit"""
    state_label: str
    orbit_id: str
    eps: float
    value: float
    error: float
    lyapunov: float
    period: float
    numerator: float
    denominator: float
    note: Optional[str] = None

    @property
    def t_lambda(self) -> float:
        return self.period * self.lyapunov
