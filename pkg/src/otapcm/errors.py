"""Exception types shared across the package."""


class DimensionError(ValueError):
    """Tensor shapes do not line up."""


class StateError(RuntimeError):
    """An operation was called out of order (e.g. backward before forward)."""


class NumericError(ArithmeticError):
    """A non-finite value appeared where a finite one is required."""


class ConfigError(ValueError):
    """Invalid or inconsistent experiment configuration."""


class FormatError(ValueError):
    """A file does not follow the expected container layout."""
