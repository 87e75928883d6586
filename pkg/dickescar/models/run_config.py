"""Per-run reproducibility bundle"""

import hashlib
import json
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

import numpy as np
from dotenv import dotenv_values
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from dickescar.config import get_settings
from dickescar.errors import ConfigError

from .metrics import GridSpec
from .quantum import ModelParams, Parity

settings = get_settings()

# Bumped whenever an output or cache layout changes
FORMAT_VERSION = 1

DEFAULT_ALPHAS = [float(a) for a in np.arange(0.0, 4.0 + 1e-9, 0.25)]

LIST_FIELDS = ('alphas', 'window', 'states', 'orbits')


class RunConfig(BaseModel):
    """All inputs of one CLI command.

    The file form is flat `key=value` text (python-dotenv syntax), list values
    comma separated. Flags given on the command line win over file values.
    """

    model_config = ConfigDict(extra="forbid", validate_assignment=True)

    # Model
    omega: float = Field(1.0, gt=0)
    omega0: float = Field(1.0, gt=0)
    gamma: float = Field(1.0, ge=0)
    j: float = Field(30.0, ge=0.5)

    # Basis
    n_max: Optional[int] = Field(None, ge=0, description="None selects the cutoff heuristic")
    parity: Parity = Parity.POSITIVE
    tail_width: Optional[int] = Field(None, ge=0)
    tail_tol: float = Field(default_factory=lambda: settings.TAIL_TOL, ge=0)

    # Energy window; `window=lo,hi` in files or on the command line
    window_center: float = -0.5
    window_width: float = Field(0.3, gt=0)
    window: Optional[List[float]] = None

    # Localization
    alphas: List[float] = Field(default_factory=lambda: list(DEFAULT_ALPHAS))
    samples: int = Field(20000, ge=1)
    seed: int = Field(12345, ge=0)
    random_states: int = Field(5, ge=0)
    shell_scheme: str = "root"

    # Grids
    grid: int = Field(101, ge=3)
    n_theta: int = Field(64, ge=8)
    grid_alpha: Optional[float] = Field(None, ge=0)

    # Orbit hunting
    t_max: float = Field(30.0, gt=0)
    candidate_tol: float = Field(0.1, gt=0)
    newton_tol: float = Field(1e-10, gt=0)
    max_iter: int = Field(50, ge=1)
    threshold_frac: float = Field(0.3, gt=0, le=1)
    peak_radius: int = Field(3, ge=1)
    max_peaks: int = Field(6, ge=1)
    n_time: int = Field(64, ge=16)

    # DOS
    dos_points: int = Field(200, ge=2)

    # Selectors
    states: List[str] = Field(default_factory=list)
    orbits: List[str] = Field(default_factory=list)

    # Runtime
    threads: int = Field(default_factory=lambda: settings.THREADS, ge=1)
    cache_dir: str = Field(default_factory=lambda: settings.CACHE_DIR)
    out_dir: str = Field(default_factory=lambda: settings.OUTPUT_DIR)
    images: bool = False

    @field_validator(*LIST_FIELDS, mode='before')
    @classmethod
    def split_lists(cls, v):
        if isinstance(v, str):
            return [item.strip() for item in v.split(',') if item.strip()]
        return v

    @field_validator('alphas')
    @classmethod
    def check_alphas(cls, v):
        if not v:
            raise ValueError("alphas must not be empty")
        if any(a < 0 for a in v):
            raise ValueError("alphas must be non-negative")
        return v

    @field_validator('parity', mode='before')
    @classmethod
    def parse_parity(cls, v):
        return Parity.parse(v)

    @field_validator('shell_scheme')
    @classmethod
    def check_scheme(cls, v):
        if v not in ("root", "angle"):
            raise ValueError(f"shell_scheme must be 'root' or 'angle', got {v!r}")
        return v

    @model_validator(mode='after')
    def apply_window(self):
        if self.window is not None:
            if len(self.window) != 2 or self.window[1] <= self.window[0]:
                raise ValueError("window must be two increasing energies lo,hi")
            lo, hi = self.window
            # Avoid re-triggering validation through validate_assignment
            object.__setattr__(self, 'window_center', (lo + hi) / 2)
            object.__setattr__(self, 'window_width', hi - lo)
            object.__setattr__(self, 'window', None)
        if self.parity is Parity.MIXED:
            raise ValueError("parity must be +1, -1 or both")
        return self

    @classmethod
    def from_file(cls, path: Optional[Union[str, Path]] = None, **overrides: Any) -> "RunConfig":
        """Load a key=value file, then apply non-None overrides"""
        values: Dict[str, Any] = {}
        if path is not None:
            path = Path(path)
            if not path.is_file():
                raise ConfigError(f"Config file not found: {path}")
            values.update({k: v for k, v in dotenv_values(path).items() if v is not None})
        values.update({k: v for k, v in overrides.items() if v is not None})
        try:
            return cls(**values)
        except ValidationError as e:
            raise ConfigError(f"Invalid configuration: {e}") from e

    @property
    def window_bounds(self) -> tuple:
        half = self.window_width / 2
        return self.window_center - half, self.window_center + half

    @property
    def grid_spec(self) -> GridSpec:
        return GridSpec(n_Q=self.grid, n_P=self.grid)

    def model_params(self) -> ModelParams:
        return ModelParams(omega=self.omega, omega0=self.omega0, gamma=self.gamma, j=self.j)

    def physics_dict(self) -> Dict[str, Any]:
        """Inputs that determine numerical results (runtime knobs excluded)"""
        return self.model_dump(mode='json', exclude={'threads', 'cache_dir', 'out_dir', 'images'})

    def config_hash(self) -> str:
        payload = json.dumps(self.physics_dict(), sort_keys=True)
        return hashlib.sha256(payload.encode()).hexdigest()[:16]

    def ensure_dirs(self) -> None:
        for directory in (self.cache_dir, self.out_dir):
            try:
                Path(directory).expanduser().mkdir(parents=True, exist_ok=True)
            except OSError as e:
                raise ConfigError(f"Cannot create directory {directory}: {e}") from e
