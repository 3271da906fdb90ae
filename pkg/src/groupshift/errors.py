"""Exception hierarchy shared across the package."""


class GroupShiftError(Exception):
    """Base class for all library errors."""


class ConfigurationError(GroupShiftError):
    """Invalid configuration, parameters, or unusable inputs."""


class DataError(GroupShiftError):
    """Malformed data files or inconsistent dataset contents."""


class ShapeError(GroupShiftError, ValueError):
    """Dimension mismatch between inputs and fitted structures."""


class GenerationError(GroupShiftError):
    """Synthetic data generation could not satisfy its constraints."""


class DegenerateTrainingError(GroupShiftError):
    """Training data does not contain both classes."""


class UndefinedAucError(GroupShiftError):
    """AUC requested for a sample that lacks one of the classes."""


class UndefinedSilhouetteError(GroupShiftError):
    """Silhouette requested for a single-cluster model."""


class EmptyCellError(GroupShiftError):
    """A (group, cluster) cell contains no examples."""


class PreconditionError(GroupShiftError):
    """Inputs violate a documented precondition."""


class VerificationError(GroupShiftError):
    """A verification bound was violated."""
