"""Exception types shared across the package."""


class FuselageQBOError(Exception):
    """Base class for errors raised by this package."""


class ConfigError(FuselageQBOError, ValueError):
    """Invalid configuration value or file."""


class DomainError(FuselageQBOError, ValueError):
    """Argument outside the operation's domain."""


class NumericalError(FuselageQBOError, ArithmeticError):
    """Numerically singular or ill-conditioned computation."""
