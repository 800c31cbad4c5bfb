"""Exception types shared across the package."""


class ChromavitError(Exception):
    """Base class for all errors raised by this package."""


class DimensionError(ChromavitError, ValueError):
    """Operand shapes are incompatible with the requested operation."""


class DomainError(ChromavitError, ValueError):
    """A value lies outside its permitted domain."""


class NumericError(ChromavitError, ArithmeticError):
    """A computation produced or encountered non-finite values."""


class ConfigError(ChromavitError, ValueError):
    """Invalid or inconsistent configuration."""


class SplitError(ChromavitError, ValueError):
    """A dataset cannot be partitioned as requested."""


class DatasetError(ChromavitError, ValueError):
    """A dataset directory is missing, empty, or malformed."""


class ContainerError(ChromavitError, ValueError):
    """Bytes on disk are not a valid model container."""


class VersionError(ContainerError):
    """The model container declares an unsupported format version."""
