"""Computation, caching and output services"""

from . import telemetry
from .cache_service import CacheService
from .output_service import OutputService

__all__ = ['telemetry', 'CacheService', 'OutputService']
