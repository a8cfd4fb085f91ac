"""Exception hierarchy shared by every mfgchain module."""

from __future__ import annotations


class MfgChainError(ValueError):
    """Base class for all errors raised by mfgchain."""


class ParameterError(MfgChainError):
    """A numeric parameter is outside its admissible range."""


class DivisibilityError(MfgChainError):
    """L/h or T/delta is not an integer."""


class RangeError(MfgChainError):
    """A state lies outside the interval [0, L]."""


class IncrementError(MfgChainError):
    """A path increment is too large for the one-step Skorohod recursion."""


class GridMismatchError(MfgChainError):
    """Two objects live on incompatible grids."""


class SpecError(MfgChainError):
    """A coefficient specification is malformed."""


class ConfigError(MfgChainError):
    """A run configuration is invalid.

    ``field`` and ``line`` locate the offending entry when known.
    """

    def __init__(self, message: str, field: str | None = None, line: int | None = None):
        self.field = field
        self.line = line
        where = []
        if field is not None:
            where.append(f"field '{field}'")
        if line is not None:
            where.append(f"line {line}")
        if where:
            message = f"{message} ({', '.join(where)})"
        super().__init__(message)


class NumericalError(MfgChainError):
    """A computed quantity blew past a sanity bound."""
