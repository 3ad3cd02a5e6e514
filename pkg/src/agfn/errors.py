"""Exception hierarchy shared by every module in the package."""


class AGFNError(Exception):
    """Base class for all package errors."""


class ShapeError(AGFNError, ValueError):
    pass


class DomainError(AGFNError, ValueError):
    pass


class StateError(AGFNError, RuntimeError):
    pass


class ParseError(AGFNError, ValueError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class ConfigError(AGFNError, ValueError):
    pass


class DivergenceError(AGFNError, ArithmeticError):
    pass
