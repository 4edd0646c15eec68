"""Exception types raised across the package."""


class GLRBanditError(Exception):
    """Base class for all package errors."""


class InvalidConfig(GLRBanditError, ValueError):
    pass


class NonSymmetricInput(GLRBanditError, ValueError):
    pass


class NegativeQuadraticForm(GLRBanditError, ValueError):
    pass


class EmptyArmSet(GLRBanditError, ValueError):
    pass


class EmptySampleSet(GLRBanditError, ValueError):
    pass


class RankOutOfRange(GLRBanditError, ValueError):
    pass


class DimensionMismatch(GLRBanditError, ValueError):
    pass


class NotConverged(GLRBanditError, RuntimeError):
    """An iterative solver ran out of iterations.

    The last iterate and the final residual (or iterate change) are kept so
    callers can decide whether the approximate answer is usable.
    """

    def __init__(self, message, last_iterate=None, residual=None):
        super().__init__(message)
        self.last_iterate = last_iterate
        self.residual = residual
