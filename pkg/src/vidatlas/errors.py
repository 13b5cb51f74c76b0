"""Exception types shared across the package."""


class VidatlasError(Exception):
    """Base class for all package errors."""


class ConfigError(VidatlasError):
    """Invalid configuration: bad network spec, shape mismatch, bad layout."""


class IngestionError(VidatlasError):
    """Input data could not be loaded (bad frame, mixed dimensions, ...)."""


class FormatError(VidatlasError):
    """A binary container (flow file, checkpoint) is malformed."""


class TrainingError(VidatlasError):
    """Optimization failed (non-finite loss or gradient)."""


class UsageError(VidatlasError):
    """An operation was called in an unsupported way."""
