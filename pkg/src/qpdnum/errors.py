"""Exception hierarchy shared by every qpdnum module."""


class QpdError(Exception):
    """Base class for all qpdnum errors."""


class DimensionError(QpdError):
    pass


class RankError(QpdError):
    pass


class CurvatureError(QpdError):
    pass


class SingularKkt(QpdError):
    pass


class NoConvergence(QpdError):
    pass


class NumericError(QpdError):
    pass


class NotQuadratic(QpdError):
    pass


class NotContractive(QpdError):
    pass


class ParamError(QpdError, ValueError):
    pass


class IntervalViolation(QpdError):
    """A zoom-in encoder found its input outside the predicted interval.

    ``step`` is the time index at which it happened, when known.
    """

    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step


class DesyncError(QpdError):
    pass


class EmptyLedger(QpdError):
    pass


class SingularT(QpdError):
    pass


class DomainError(QpdError, ValueError):
    pass


class ConfigError(QpdError):
    """Malformed config or problem file; ``line`` is 1-based when known."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line
