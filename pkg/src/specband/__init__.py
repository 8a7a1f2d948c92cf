"""Equilibrium measures, orthogonal polynomials with varying weights, finite-band
Jacobi operators, theta-function coefficients and log-gas statistics."""

from .errors import SpecbandError, ValidationError
from .potential import BandSet, Potential

__version__ = "0.1.0"

__all__ = ["BandSet", "Potential", "SpecbandError", "ValidationError", "__version__"]
