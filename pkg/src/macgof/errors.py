"""Exception types used to separate data problems from numerical failures."""


class MacgofError(Exception):
    """Base class for errors raised by this package."""


class DataError(MacgofError):
    """Raised when input data cannot be used (bad columns, empty sample, ...)."""


class NumericalError(MacgofError):
    """Raised when a numerical procedure fails (rank deficiency, divergence, ...)."""
