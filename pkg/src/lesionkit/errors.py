"""Exception types shared across the package."""


class LesionKitError(Exception):
    """Base class for all package-specific failures."""


class DatasetError(LesionKitError):
    """Raised for ingestion, manifest, or split problems."""


class ModelError(LesionKitError):
    """Raised for classifier construction or inference problems."""


class TrainingError(LesionKitError):
    """Raised when a training run cannot proceed (bad splits, divergence)."""


class ArtifactError(LesionKitError):
    """Raised for unreadable, corrupt, or version-mismatched checkpoints."""


class ExplainError(LesionKitError):
    """Raised when an explanation cannot be computed."""


class ConfigError(LesionKitError):
    """Raised for unreadable or invalid configuration files."""
