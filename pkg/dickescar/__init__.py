"""Dicke scar toolkit - phase-space localization and scarring orbits of Dicke eigenstates"""

__version__ = "1.0.0"
