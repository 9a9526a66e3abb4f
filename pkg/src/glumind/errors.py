"""Exception types shared across the package."""


class GluMindError(Exception):
    pass


class ShapeError(GluMindError, ValueError):
    pass


class ConfigurationError(GluMindError, ValueError):
    pass


class LengthError(GluMindError, ValueError):
    pass


class CapacityError(GluMindError, ValueError):
    pass


class ContractError(GluMindError, RuntimeError):
    pass


class EmptySeriesError(GluMindError, ValueError):
    pass


class InsufficientDataError(GluMindError, ValueError):
    def __init__(self, required: int, available: int, what: str = "glucose samples"):
        super().__init__(f"insufficient data: need {required} {what}, have {available}")
        self.required = required
        self.available = available


class ParseError(GluMindError, ValueError):
    def __init__(self, message: str, line: int | None = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class SplitError(GluMindError, ValueError):
    pass


class CompatibilityError(GluMindError, ValueError):
    def __init__(self, message: str, field: str | None = None):
        super().__init__(message)
        self.field = field


class StateError(GluMindError, RuntimeError):
    pass


class DomainError(GluMindError, ValueError):
    pass


class UndefinedCorrelationError(GluMindError, ValueError):
    pass


class TrainingAbort(GluMindError, RuntimeError):
    pass
