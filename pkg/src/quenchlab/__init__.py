"""Quench dynamics of short-range transverse-field Ising chains.

Exact free-fermion dynamics for the integrable chain, exact diagonalization
for the nonintegrable one, and the fitting machinery that turns single-site
magnetization curves into decay rates, scaling exponents and crossover
locations.
"""

from .errors import (AccuracyError, ConfigError, DomainError, NumericalConsistencyError,
                     QuenchLabError, ResourceError, ShapeError, UnsupportedModelError)
from .model import (ChainSpec, LightconeWindow, QuenchSpec, TimeGrid, TimeSeries,
                    lightcone_window, quasiparticle_velocity)

__version__ = "0.1.0"

__all__ = [
    "AccuracyError", "ChainSpec", "ConfigError", "DomainError", "LightconeWindow",
    "NumericalConsistencyError", "QuenchLabError", "QuenchSpec", "ResourceError", "ShapeError",
    "TimeGrid", "TimeSeries", "UnsupportedModelError", "lightcone_window",
    "quasiparticle_velocity",
]
