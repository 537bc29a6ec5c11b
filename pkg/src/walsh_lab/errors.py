"""Exception hierarchy shared by every walsh_lab module."""


class WalshLabError(Exception):
    """Base class for all library errors."""


class DimensionError(WalshLabError, ValueError):
    """Matrix shape or requested count is incompatible with the operation."""


class DomainError(WalshLabError, ValueError):
    """Input lies outside the mathematical domain of the operation."""


class CoefficientRangeError(DomainError):
    """A coefficient stream is too short for the requested computation.

    ``needed`` is the stream length that would have been sufficient.
    """

    def __init__(self, message, needed):
        super().__init__(message)
        self.needed = needed


class DegenerateError(DomainError):
    """Rational symbol has no pole at the requested level."""


class NumericError(WalshLabError, ArithmeticError):
    """Overflow, invalid operation or loss of precision inside the kernel."""


class ConvergenceError(NumericError):
    """An iteration hit its cap before meeting the tolerance.

    ``residual`` holds the last off-diagonal measure that was observed.
    """

    def __init__(self, message, residual):
        super().__init__(message)
        self.residual = residual


class ConfigError(WalshLabError):
    """Experiment configuration is malformed.

    ``field`` names the offending key and ``line`` the source line when the
    parser could provide one.
    """

    def __init__(self, message, field=None, line=None):
        detail = message
        if field is not None:
            detail = f"{field}: {detail}"
        if line is not None:
            detail = f"line {line}: {detail}"
        super().__init__(detail)
        self.field = field
        self.line = line
