"""Periodic orbit models"""

from typing import List, Optional

import numpy as np
from pydantic import BaseModel, Field

from .base import FrozenModel
from .phase_space import PhasePoint
from .quantum import ModelParams


class OrbitCandidate(FrozenModel):
    """Approximate return found by direct integration"""
    seed: PhasePoint
    period: float = Field(..., gt=0, description="Approximate period T_approx")
    residual: float = Field(..., ge=0, description="|x(T_approx) - x(0)|")
    label: str = ""


class PeriodicOrbit(FrozenModel):
    """Refined periodic orbit with its monodromy matrix"""
    x0: PhasePoint
    period: float = Field(..., gt=0)
    energy: float
    monodromy: np.ndarray
    lyapunov: float = Field(..., ge=0)
    closure_residual: float
    params: ModelParams
    label: str = ""
    orbit_id: str = ""
    iterations: int = 0

    @property
    def t_lambda(self) -> float:
        return self.period * self.lyapunov


class HuntFailure(BaseModel):
    """A seed that did not yield an orbit"""
    seed_index: int
    stage: str
    code: str
    message: str
    seed: Optional[List[float]] = None


class OrbitCatalog(FrozenModel):
    """De-duplicated orbits in insertion order"""
    orbits: List[PeriodicOrbit] = Field(default_factory=list)

    def ids(self) -> List[str]:
        return [o.orbit_id for o in self.orbits]

    def get(self, orbit_id: str) -> Optional[PeriodicOrbit]:
        for orbit in self.orbits:
            if orbit.orbit_id == orbit_id:
                return orbit
        return None
