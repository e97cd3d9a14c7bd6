"""Exception types shared across the pipeline."""


class PamkitError(Exception):
    """Base class for all pipeline errors."""


class AudioFormatError(PamkitError):
    """Unsupported container, bit depth, or channel layout."""


class AudioIOError(PamkitError):
    """File unreadable or truncated."""


class UnsupportedDirectionError(PamkitError):
    """Resampling request outside the supported (downsampling) direction."""


class SampleRateMismatchError(PamkitError):
    """Two clips or a clip and a config disagree on sample rate."""


class BandConfigError(PamkitError):
    """Frequency band invalid for the analysis rate."""


class DegenerateResolutionError(PamkitError):
    """Too few FFT bins to resolve the requested Mel bands."""


class ConfigMismatchError(PamkitError):
    """Feature/stats/config objects from incompatible configurations."""


class ParamError(PamkitError):
    """Parameter outside its documented range."""


class ZeroBackgroundError(PamkitError):
    """Background signal has zero RMS; SNR undefined."""


class ModelMismatchError(PamkitError):
    """Embeddings from different encoder models mixed in one operation."""


class EmptyInputError(PamkitError):
    """Operation requires at least one element."""


class ConflictError(PamkitError):
    """Store upsert conflicts with an existing record."""


class UnknownSegmentError(PamkitError):
    """Decision references a segment id not present in the store."""


class LeakageError(PamkitError):
    """Train/validation separation would be violated."""


class ValidationError(PamkitError):
    """Input record failed schema or range validation."""


class ConfigError(PamkitError):
    """Pipeline configuration failed schema validation."""
