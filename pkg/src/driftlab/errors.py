"""Exception taxonomy shared across the package.

Plain ValueError covers invalid arguments; OSError covers I/O.
"""


class StateError(RuntimeError):
    """Operation requires state the object does not have yet (or has frozen)."""


class NumericError(ArithmeticError):
    """Non-finite values where finite ones are required."""


class FormatError(ValueError):
    """Malformed external data (dataset files, config payloads)."""


class FitError(RuntimeError):
    """Curve fit cannot proceed or did not produce a usable result."""


class UnsupportedError(RuntimeError):
    """Requested operation is outside the supported regime."""
