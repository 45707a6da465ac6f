"""Exception types shared across the package."""


class FedremaError(Exception):
    """Base class for all package errors."""


class DimensionError(FedremaError):
    """Structural error: incompatible array shapes."""


class ConfigurationError(FedremaError):
    """Invalid experiment configuration or dataset request."""


class IdxFormatError(FedremaError):
    """Malformed IDX file; message carries the byte offset of the problem."""
