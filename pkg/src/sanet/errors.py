"""Exception hierarchy shared across the package."""


class SanetError(Exception):
    """Base class for all package-specific errors."""


class ConfigError(SanetError):
    """Invalid configuration value or malformed config file."""


class DataError(SanetError):
    """Corpus file, record, or split problem."""


class StructureError(DataError):
    """Propagation tree violates the rooted-tree invariants."""


class DimensionError(SanetError, ValueError):
    """Tensor or feature shapes do not conform."""


class NumericError(SanetError):
    """Non-finite value, missing gradient, or failed numeric check."""
