"""Polarization imaging toolkit for driving scenes.

Mosaic decoding, shape-from-polarization normal candidates, camera/lidar
geometry, free-space and depth metrics, a synthetic polarization renderer and
dataset I/O.
"""

from __future__ import annotations

from .errors import DataError, DegenerateInputError, DomainError, PolarkitError
from .polar_decode import PolarRaw, decode

__version__ = "0.1.0"
