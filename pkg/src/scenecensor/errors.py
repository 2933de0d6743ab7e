"""Exception types shared across the package."""


class CensorToolError(Exception):
    """Base class for all errors raised by scenecensor."""


class InputError(CensorToolError, ValueError):
    """Bad user input: malformed media, inconsistent data, wrong shapes."""


class MediaFormatError(InputError):
    """A Y4M, WAV, EMB1, bundle or XML payload could not be parsed."""


class SegmentError(InputError):
    """Segments cannot be split or merged as requested."""


class DimensionError(InputError):
    """A vector or matrix has the wrong dimension for the model it meets."""


class TrainingError(InputError):
    """Training data is unusable (single class, non-finite values, too few rows)."""


class ProviderError(CensorToolError):
    """An embedding provider failed to produce embeddings."""
