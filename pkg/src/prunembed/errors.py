"""Exception hierarchy shared across the package.

Every validation failure raises one of these classes with a short
machine-greppable message prefix ("artifact missing", "shape error", ...).
"""


class PrunembedError(Exception):
    """Base class for all errors raised by this package."""


class ArtifactError(PrunembedError):
    """A model artifact (directory, file, or tensor) is missing or unreadable."""


class ShapeError(PrunembedError):
    """A tensor or batch has a shape inconsistent with its configuration."""


class CorruptWeightsError(PrunembedError):
    """Loaded weights contain non-finite values."""


class ConfigError(PrunembedError):
    """A configuration value violates its documented domain."""


class VocabError(PrunembedError):
    """Vocabulary contents or token ids are invalid."""


class DataError(PrunembedError):
    """Dataset, batch, or task level validation failure."""
