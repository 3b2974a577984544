"""Exception hierarchy shared by every module.

Each class carries the CLI exit code it maps to.
"""


class TrajGCNError(Exception):
    exit_code = 1


class ShapeError(TrajGCNError, ValueError):
    exit_code = 2


class ConfigError(TrajGCNError, ValueError):
    exit_code = 2


class StateError(TrajGCNError, RuntimeError):
    exit_code = 2


class DataError(TrajGCNError, ValueError):
    exit_code = 2


class TrainingError(TrajGCNError, RuntimeError):
    """Raised when a loss turns non-finite during training."""

    exit_code = 1
