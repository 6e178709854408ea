"""Exception types raised across the package."""


class DyadicIntentError(Exception):
    """Base class for all package errors."""


class InvalidInputError(DyadicIntentError, ValueError):
    """Non-finite, mis-shaped or otherwise unusable input."""


class DegenerateDirectionError(InvalidInputError):
    """A direction could not be formed (zero-length vector)."""


class ConfigError(DyadicIntentError, ValueError):
    """A configuration value is missing, malformed or out of range."""


class InitializationError(DyadicIntentError, RuntimeError):
    """An estimator could not be initialized from the data it was given."""


class AlignmentError(DyadicIntentError, ValueError):
    """Sensor streams cannot be brought onto a common timeline."""


class SchemaError(DyadicIntentError, ValueError):
    """An on-disk artifact does not follow its documented schema."""


class MissingStreamError(SchemaError, FileNotFoundError):
    """A required raw stream file is absent."""


class UndefinedScoreError(InvalidInputError):
    """A clustering score is undefined for the given labeling."""
