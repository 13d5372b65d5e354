"""Exception hierarchy shared by all modules."""


class GibbsError(Exception):
    """Base class for every error raised by gibbsmple."""


class InvalidInput(GibbsError, ValueError):
    pass


class MisalignedWindow(InvalidInput):
    pass


class WindowTooSmall(InvalidInput):
    pass


class PatternParseError(InvalidInput):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class ModelDataMismatch(InvalidInput):
    pass


class InvalidParameter(InvalidInput):
    pass


class ConfigurationError(InvalidInput):
    pass


class InfeasibleData(GibbsError):
    """Observed data violates a hard core of the model."""


class NumericError(GibbsError, ArithmeticError):
    pass


class IllConditioned(NumericError):
    def __init__(self, message, condition=None):
        self.condition = condition
        super().__init__(message)


class IdentifiabilityError(IllConditioned):
    pass
