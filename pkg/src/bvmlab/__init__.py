"""Numerical laboratory for Bernstein-von Mises behaviour of g-prior and
pMoM posteriors in linear regression."""

from .errors import NumericalError, ValidationError

__version__ = "0.1.0"

__all__ = ["NumericalError", "ValidationError", "__version__"]
