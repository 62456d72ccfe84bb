"""Remaining-useful-life estimation for C-MAPSS-format turbofan data."""

from .errors import NumericError, ParseError, SolverError, StructuralError

__version__ = "0.1.0"

__all__ = ["NumericError", "ParseError", "SolverError", "StructuralError", "__version__"]
