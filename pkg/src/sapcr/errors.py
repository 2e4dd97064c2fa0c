"""Exception hierarchy shared by every module."""


class SapError(Exception):
    """Base class for all package errors."""


class ParameterError(SapError, ValueError):
    """A model parameter or function argument is outside its valid domain."""


class NumericError(SapError, ArithmeticError):
    """Quadrature, root finding or a fixed-point iteration failed.

    ``estimate`` carries the last error estimate or iterate when one exists.
    """

    def __init__(self, message, estimate=None, trace=None):
        super().__init__(message)
        self.estimate = estimate
        self.trace = trace


class DomainError(NumericError):
    """A closed-form expression is evaluated outside its validity domain."""


class InfeasibleProtectionError(SapError):
    """No decoding target can keep the primary outage below the cap."""


class ConfigError(SapError, ValueError):
    """An experiment configuration failed schema validation."""

    def __init__(self, message, path=""):
        super().__init__(message)
        self.path = path if isinstance(path, str) else "/".join(str(p) for p in path)
