"""Exception types shared across the package."""


class ParseError(ValueError):
    """A line of a C-MAPSS text file could not be parsed."""

    def __init__(self, message, lineno=None):
        self.lineno = lineno
        if lineno is not None:
            message = f"line {lineno}: {message}"
        super().__init__(message)


class StructuralError(ValueError):
    """Input is well-formed row by row but inconsistent as a whole
    (cycle gaps, label count mismatch, shape mismatch)."""


class SolverError(ArithmeticError):
    pass


class NumericError(ArithmeticError):
    """Non-finite values appeared during a forward pass or training."""
