"""Exception hierarchy shared by every raplab module."""


class RapLabError(Exception):
    """Base class for all raplab errors."""


class ConfigError(RapLabError, ValueError):
    """Invalid configuration value, unknown key, or bad dimension."""


class ShapeError(RapLabError, ValueError):
    pass


class NumericError(RapLabError, ArithmeticError):
    """A non-finite value reached a place that requires finite input."""


class ProtocolError(RapLabError, RuntimeError):
    """An object was used out of order (e.g. stepping a finished episode)."""


class UnsupportedOperationError(RapLabError, TypeError):
    pass
