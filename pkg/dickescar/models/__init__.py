"""Data models"""

from .quantum import ModelParams, BasisSpec, Spectrum, StateVector, Parity
from .phase_space import PhasePoint, Trajectory, TangentState, ShellSample, LyapunovEstimate
from .orbit import OrbitCandidate, PeriodicOrbit, OrbitCatalog, HuntFailure
from .metrics import GridSpec, QuadSpec, HusimiGrid, OccupationCurve, ScarMeasurement
from .run_config import RunConfig

__all__ = [
    'ModelParams', 'BasisSpec', 'Spectrum', 'StateVector', 'Parity',
    'PhasePoint', 'Trajectory', 'TangentState', 'ShellSample', 'LyapunovEstimate',
    'OrbitCandidate', 'PeriodicOrbit', 'OrbitCatalog', 'HuntFailure',
    'GridSpec', 'QuadSpec', 'HusimiGrid', 'OccupationCurve', 'ScarMeasurement',
    'RunConfig'
]
