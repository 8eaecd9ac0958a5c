"""Exception hierarchy shared by every estimator and audit."""


class PrivMeanError(Exception):
    """Base class for all package errors."""


class InvalidParameter(PrivMeanError, ValueError):
    pass


class SingularMatrix(PrivMeanError, ValueError):
    pass


class EmptyRelease(PrivMeanError):
    """Every bin of a stable histogram was suppressed."""


class EstimationFailed(PrivMeanError):
    """A private preprocessing step could not produce an estimate."""


class InsufficientSamples(PrivMeanError, ValueError):
    pass


class UnsupportedDimension(PrivMeanError, ValueError):
    pass


class GridTooLarge(PrivMeanError):
    pass


class EmptySupport(PrivMeanError):
    """No grid cell reaches the requested depth threshold."""


class InstanceTooLarge(PrivMeanError, ValueError):
    """An exhaustive oracle was asked to enumerate beyond its caps."""


class ProjectionFailed(PrivMeanError):
    pass


class BadShape(PrivMeanError, ValueError):
    pass


class ConfigError(PrivMeanError, ValueError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class DataFormatError(PrivMeanError, ValueError):
    pass
