"""Exception types shared across the package."""


class QbembedError(Exception):
    """Base class for all package-specific errors."""


class UnsupportedElementError(QbembedError, ValueError):
    """Raised when a molecule contains an element the integral code cannot handle."""


class LinearDependenceError(QbembedError, ValueError):
    """Raised when an overlap matrix is numerically singular (smallest eigenvalue below threshold)."""


class ConvergenceError(QbembedError, RuntimeError):
    """Raised when an iterative solver fails to converge.

    Carries the last residual so callers can report how close the run got.
    """

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class FcidumpParseError(QbembedError, ValueError):
    """Raised on malformed FCIDUMP input. ``line_number`` is 1-based."""

    def __init__(self, message, line_number=None):
        if line_number is not None:
            message = f"line {line_number}: {message}"
        super().__init__(message)
        self.line_number = line_number


class ResourceLimitError(QbembedError, RuntimeError):
    """Raised when a request exceeds the desk-scale qubit or dimension limits."""


class DegenerateGapError(QbembedError, ArithmeticError):
    """Raised when an energy-denominator expression meets a (near-)degenerate gap."""
