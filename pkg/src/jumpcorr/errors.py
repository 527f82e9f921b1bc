"""Exception types shared across the package.

Most errors derive from ValueError so callers that only care about
"bad input" can catch one base class; the CLI maps the groups below
onto its exit codes.
"""


class JumpcorrError(Exception):
    """Base class for all package-specific errors."""


class InvalidInputError(JumpcorrError, ValueError):
    """An argument violates a documented precondition."""


class UnderdeterminedError(InvalidInputError):
    """Fewer observations than free parameters."""


class TruncationUnsafeError(InvalidInputError):
    """Requested level lies too close to the basis truncation."""


class NegativeTemperatureError(InvalidInputError):
    """Population inversion: no thermal temperature reproduces it."""


class InfeasibleFidelityError(InvalidInputError):
    """No noise level can realize the requested assignment fidelity."""


class PackingError(InvalidInputError):
    """Correlated epochs cannot be placed inside the monitoring window."""


class UnresolvablePeaksError(JumpcorrError):
    """The I/Q histogram does not separate into two usable peaks."""


class InvalidPeaksError(InvalidInputError):
    """Peak geometry leaves no hysteresis band for the filter."""


class InsufficientStatisticsError(JumpcorrError):
    """Too few complete dwells to estimate rates."""


class UndefinedCorrelationError(JumpcorrError):
    """Pearson correlation undefined (constant sequence)."""


class NumericalError(JumpcorrError):
    """A numerical routine failed in a way that invalidates the result."""


class FileFormatError(JumpcorrError):
    """A persisted file does not match its declared format."""


class FileVersionError(FileFormatError):
    """File magic matches but the format version is unsupported."""


class FileCorruptionError(FileFormatError):
    """Header and payload disagree (truncated or damaged file)."""


class ValidationError(JumpcorrError):
    """Configuration failed validation; message carries the field path."""


class DependencyError(JumpcorrError):
    """A pipeline stage is missing outputs of an upstream stage."""
