"""Exception types raised across the package."""


class ShedError(Exception):
    """Base class for all package errors."""


class InvalidParameterError(ShedError, ValueError):
    def __init__(self, dim, message=None):
        self.dim = dim
        super().__init__(message or f"invalid value for parameter dim {dim!r}")


class IllegalTransitionError(ShedError, RuntimeError):
    pass


class InfeasibleSpecError(ShedError, ValueError):
    pass


class MalformedGridError(ShedError, ValueError):
    pass


class InvalidDeltaError(ShedError, ValueError):
    pass


class TooManyEnvironmentsError(ShedError, ValueError):
    pass


class CoverageViolationError(ShedError, RuntimeError):
    pass


class ShapeError(ShedError, ValueError):
    pass


class InsufficientDimensionsError(ShedError, ValueError):
    pass


class CannotTrainError(ShedError, RuntimeError):
    pass


class NoRealDataError(ShedError, RuntimeError):
    pass


class InvalidScheduleError(ShedError, ValueError):
    pass


class TrainingDivergedError(ShedError, FloatingPointError):
    def __init__(self, message, minibatch=None):
        self.minibatch = minibatch
        super().__init__(message if minibatch is None else f"{message} (minibatch {minibatch})")


class IncompatibleLogsError(ShedError, ValueError):
    pass


class ConfigError(ShedError, ValueError):
    pass


class RunAbortedError(ShedError, RuntimeError):
    def __init__(self, event_index, cause):
        self.event_index = event_index
        self.cause = cause
        super().__init__(f"run aborted at event {event_index}: {cause!r}")
