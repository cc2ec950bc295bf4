"""Exception hierarchy shared by every module in the package."""


class BrownianSSEError(Exception):
    """Base class for all package errors."""


class InvalidDimensionError(BrownianSSEError, ValueError):
    pass


class DimensionMismatchError(BrownianSSEError, ValueError):
    pass


class TruncationLeakageError(BrownianSSEError):
    """Probability weight escaped (or would escape) the truncated Fock space."""


class DegenerateNormError(BrownianSSEError):
    pass


class IntegrationDivergedError(BrownianSSEError):
    pass


class NoConvergenceError(BrownianSSEError):
    pass


class UnsupportedVariantError(BrownianSSEError, ValueError):
    pass


class InsufficientSamplesError(BrownianSSEError, ValueError):
    pass


class TrajectoryError(BrownianSSEError):
    """A single stochastic trajectory failed.

    Carries the trajectory index and the simulation time of the failure so
    ensemble drivers can report where things went wrong.
    """

    def __init__(self, message, *, index=None, time=None, cause=None):
        self.index = index
        self.time = time
        self.cause = cause
        where = []
        if index is not None:
            where.append(f"trajectory {index}")
        if time is not None:
            where.append(f"t={time:.6g}")
        if where:
            message = f"{message} ({', '.join(where)})"
        super().__init__(message)
