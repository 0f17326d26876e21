"""Exception hierarchy shared across the package."""


class InterlaceError(Exception):
    """Base class for package errors."""


class ConfigurationError(InterlaceError, ValueError):
    """Unknown family, pattern or malformed configuration."""


class ValidationError(InterlaceError, ValueError):
    """Input violates a documented precondition."""


class ConsistencyError(InterlaceError, RuntimeError):
    """Internal invariant broken (e.g. unmerged duplicate nodes)."""


class ModelingError(InterlaceError, RuntimeError):
    """The structural model is singular (a mechanism).

    ``null_vector`` holds the offending displacement pattern when available.
    """

    def __init__(self, message, null_vector=None):
        super().__init__(message)
        self.null_vector = null_vector


class EstimationError(InterlaceError, ValueError):
    """A spectral estimate cannot be formed (e.g. -3 dB crossing off-axis)."""


class CheckpointError(InterlaceError, RuntimeError):
    """Corrupt checkpoint or configuration fingerprint mismatch."""


class NumericalError(InterlaceError, FloatingPointError):
    """Training diverged (NaN/inf loss)."""
