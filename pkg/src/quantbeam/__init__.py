"""Robust joint communication/sensing beamforming with coarse DAC/ADC front ends.

The package provides the additive quantization noise model (quantization),
channel and target generators (channel), performance metrics (metrics), a
self-contained conic ADMM engine (conic), a semidefinite-relaxation solver for
the point-target uniform-DAC case (sdr), a majorization-minimization solver
for everything else (mm), experiment drivers (sim), and a command line
front end (cli).
"""

__version__ = "0.1.0"

from .errors import ConfigError, InfeasibleError, SolverError

__all__ = ["ConfigError", "InfeasibleError", "SolverError", "__version__"]
