"""Exception and warning types raised across the package."""


class OtfsIsacError(Exception):
    """Base class for all package errors."""


class InvalidDimensionError(OtfsIsacError, ValueError):
    pass


class InvalidPathError(OtfsIsacError, ValueError):
    pass


class FramingError(OtfsIsacError, ValueError):
    """Bit stream length does not fit the constellation."""


class RankDeficiencyError(OtfsIsacError, ArithmeticError):
    """Gram matrix of the effective channel is singular (ZF undefined)."""


class BoundDomainError(OtfsIsacError, ArithmeticError):
    """Negative argument under the square root of the BER lower bound."""


class InfiniteCrbError(OtfsIsacError, ArithmeticError):
    """Precoder carries no Doppler information, so the CRB is unbounded."""


class DualDomainError(OtfsIsacError, ArithmeticError):
    """``lambda - mu * eig`` is not positive for every sensing mode."""


class InfeasibleError(OtfsIsacError):
    """The CRB threshold cannot be met with the available power."""

    def __init__(self, message, bound=None):
        super().__init__(message)
        self.bound = bound


class NonConvergenceError(OtfsIsacError):
    def __init__(self, message, trace=None, state=None):
        super().__init__(message)
        self.trace = trace if trace is not None else []
        self.state = state


class ConfigError(OtfsIsacError, ValueError):
    pass


class DegenerateSinrWarning(RuntimeWarning):
    pass


class LowerBoundUnreachableWarning(RuntimeWarning):
    pass
