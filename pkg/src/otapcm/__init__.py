"""Over-the-air fusion of memristive sensor front-ends for multi-view classification."""
from .errors import ConfigError, DimensionError, FormatError, NumericError, StateError

__version__ = "0.1.0"

__all__ = ["ConfigError", "DimensionError", "FormatError", "NumericError", "StateError", "__version__"]
