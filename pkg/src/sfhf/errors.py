"""Exception hierarchy shared by every module in the package."""


class SfhfError(Exception):
    """Base class for all errors raised by this package."""


class DimensionMismatchError(SfhfError, ValueError):
    pass


class NonFiniteError(SfhfError, ArithmeticError):
    """A NaN or Inf appeared where only finite values are allowed."""


class IndefiniteOperatorError(SfhfError, ArithmeticError):
    """CG met a search direction with non-positive curvature."""


class ConvergenceError(SfhfError, RuntimeError):
    """An iterative method failed to reach its tolerance."""


class SingularMatrixError(SfhfError, ArithmeticError):
    pass


class ConfigError(SfhfError, ValueError):
    """Invalid run configuration.  ``key`` names the offending field."""

    def __init__(self, key, message):
        self.key = key
        super().__init__(f"{key}: {message}")
