"""Exception hierarchy shared by every module.

The CLI maps each family onto an exit code, so raise the narrowest class
that applies.
"""


class WdmirError(Exception):
    """Base class for all library errors."""


class ShapeError(WdmirError, ValueError):
    """Operand shapes are incompatible."""


class ConfigError(WdmirError, ValueError):
    """A configuration or hyperparameter value is invalid."""


class DataError(WdmirError, ValueError):
    """Input data (manifest, feature files, labels) is malformed."""


class NumericError(WdmirError, ArithmeticError):
    """A computation produced or received non-finite values."""


class TapeError(WdmirError, RuntimeError):
    """Misuse of the autodiff tape (stale tape, non-scalar loss, ...)."""
