"""Exception and warning types shared across the package."""


class TransposableError(Exception):
    """Base class for package errors."""


class ParameterError(TransposableError, ValueError):
    """An argument violates a documented precondition."""


class DegenerateClassError(ParameterError):
    """A class has fewer than two columns."""


class DegenerateDensityError(TransposableError, ValueError):
    """The statistics carry no spread to estimate a density from."""


class ConfigError(TransposableError, ValueError):
    """A scenario or CLI configuration is invalid."""


class ConvergenceError(TransposableError, RuntimeError):
    """An iterative solver hit its iteration cap.

    Attributes
    ----------
    residual : float
        Final convergence measure (KKT residual for glasso).
    iterations : int
    """

    def __init__(self, message, residual=float("nan"), iterations=0):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


class NumericalWarning(UserWarning):
    """Flooring, clamping or flagged entries were applied to keep going."""
