"""Command controllers"""

from .spectrum_controller import SpectrumController
from .occupation_controller import OccupationController
from .orbit_controller import OrbitController

__all__ = ['SpectrumController', 'OccupationController', 'OrbitController']
