"""Quantum model types: couplings, truncated basis, spectrum and state vectors"""

import math
from enum import Enum
from typing import Any, Dict, Optional, Union

import numpy as np
from pydantic import Field, field_validator

from .base import FrozenModel


class Parity(str, Enum):
    """Parity sector selector (MIXED is only ever a measurement outcome)"""
    POSITIVE = "+1"
    NEGATIVE = "-1"
    BOTH = "both"
    MIXED = "mixed"

    @property
    def sign(self) -> int:
        if self is Parity.POSITIVE:
            return 1
        if self is Parity.NEGATIVE:
            return -1
        raise ValueError(f"Parity {self.value} has no sign")

    @classmethod
    def parse(cls, value: Union[str, int, "Parity"]) -> "Parity":
        """Accept '+1', '1', '+', 'positive', -1, 'both', ..."""
        if isinstance(value, Parity):
            return value
        text = str(value).strip().lower()
        if text in ("+1", "1", "+", "positive", "even"):
            return cls.POSITIVE
        if text in ("-1", "-", "negative", "odd"):
            return cls.NEGATIVE
        if text in ("both", "all", "0"):
            return cls.BOTH
        raise ValueError(f"Unknown parity sector: {value!r}")


class ModelParams(FrozenModel):
    """Dicke couplings and system size"""
    omega: float = Field(1.0, gt=0, description="Field frequency")
    omega0: float = Field(1.0, gt=0, description="Atomic transition frequency")
    gamma: float = Field(1.0, ge=0, description="Atom-field coupling")
    j: float = Field(30.0, ge=0.5, description="Pseudo-spin length N/2")

    @property
    def gamma_c(self) -> float:
        return math.sqrt(self.omega * self.omega0) / 2

    @property
    def hbar_eff(self) -> float:
        return 1.0 / self.j

    @property
    def n_atoms(self) -> float:
        return 2 * self.j

    @property
    def superradiant(self) -> bool:
        return self.gamma > self.gamma_c

    def key(self) -> Dict[str, Any]:
        return {
            'omega': self.omega,
            'omega0': self.omega0,
            'gamma': self.gamma,
            'j': self.j
        }


class BasisSpec(FrozenModel):
    """Truncated Fock x |j,m> basis, optionally restricted to one parity sector.

    Basis states are stored as integer pairs (n, k) with k = m + j, ordered
    lexicographically by n then m.
    """
    j: float
    n_max: int = Field(..., ge=0)
    parity: Parity
    n: np.ndarray
    k: np.ndarray

    @property
    def dim(self) -> int:
        return int(self.n.size)

    @property
    def n_spin(self) -> int:
        return int(round(2 * self.j)) + 1

    @property
    def m(self) -> np.ndarray:
        return self.k - self.j

    @property
    def signs(self) -> np.ndarray:
        """(-1)^(n+m+j) per basis state"""
        return np.where((self.n + self.k) % 2 == 0, 1, -1)

    def index_table(self) -> np.ndarray:
        """(n_max+1, 2j+1) table of linear indices, -1 where absent"""
        table = np.full((self.n_max + 1, self.n_spin), -1, dtype=np.int64)
        table[self.n, self.k] = np.arange(self.dim)
        return table

    def key(self) -> Dict[str, Any]:
        return {'n_max': self.n_max, 'parity': self.parity.value}


class Spectrum(FrozenModel):
    """Eigen-decomposition of the Dicke Hamiltonian in a BasisSpec.

    `states` holds one real eigenvector per column; `energies` are E_k/j in
    ascending order.
    """
    params: ModelParams
    basis: BasisSpec
    energies: np.ndarray
    states: np.ndarray
    parities: np.ndarray
    tail_weights: np.ndarray
    converged_mask: np.ndarray
    tail_width: int
    tail_tol: float

    @property
    def size(self) -> int:
        return int(self.energies.size)

    @property
    def ground_energy(self) -> float:
        return float(self.energies[0])


class StateVector(FrozenModel):
    """A unit-norm state over a BasisSpec"""
    basis: BasisSpec
    coefficients: np.ndarray
    label: str = ""
    energy: Optional[float] = None

    @field_validator('coefficients')
    @classmethod
    def check_norm(cls, v):
        norm = float(np.linalg.norm(v))
        if abs(norm - 1.0) > 1e-8:
            raise ValueError(f"State vector is not normalized (norm={norm:.3e})")
        return v

    @property
    def is_real(self) -> bool:
        return not np.iscomplexobj(self.coefficients) or bool(
            np.all(self.coefficients.imag == 0)
        )
