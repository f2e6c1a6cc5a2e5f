"""Exception hierarchy shared across the package."""


class AllAxisError(Exception):
    """Base class for all package errors."""


class ShapeError(AllAxisError, ValueError):
    """Operand shapes are incompatible for the requested operation."""


class ConfigError(AllAxisError, ValueError):
    """A configuration value violates a structural constraint."""


class PartitionError(ConfigError):
    """A feature map cannot be tiled into stereo tokens along some axis."""


class UsageError(AllAxisError, ValueError):
    """An API was called in a way its contract forbids."""


class NumericError(AllAxisError, ArithmeticError):
    """An operation produced non-finite values from finite inputs."""


class DataError(AllAxisError, ValueError):
    """A data file or dataset is malformed or unusable."""


class CheckpointError(AllAxisError, ValueError):
    """A checkpoint file cannot be loaded."""


class CheckpointVersionError(CheckpointError):
    """Checkpoint format version is not supported by this build."""


class ChecksumError(CheckpointError):
    """Checkpoint payload does not match its recorded checksum."""


class FingerprintError(CheckpointError):
    """Checkpoint was written for a different model configuration."""
