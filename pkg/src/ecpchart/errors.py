"""Exception hierarchy shared by the library and the CLI exit-code mapping."""


class ChartError(Exception):
    """Base class for all ecpchart errors."""


class ValidationError(ChartError, ValueError):
    """An input violates a documented precondition."""


class SingularMatrixError(ValidationError):
    """The misclassification matrix has zero determinant, so no correction exists."""


class DataError(ValidationError):
    """Malformed tabular input. ``line`` is the 1-based source line when known."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class CalibrationError(ChartError, RuntimeError):
    """The control-limit search could not bracket or hit the target ARL0."""

    def __init__(self, message, result=None):
        super().__init__(message)
        self.result = result
