"""Exception types shared across the workbench.

The CLI maps each family onto an exit code (usage 1, data 2, numeric 3).
"""


class SefdmError(Exception):
    exit_code = 1


class ConfigurationError(SefdmError, ValueError):
    """Invalid parameters or incompatible inputs."""

    exit_code = 1


class DataError(SefdmError):
    """Missing, corrupt or mismatched data files."""

    exit_code = 2


class ChecksumError(DataError):
    pass


class StatisticalConfidenceError(SefdmError, ValueError):
    """Too few samples for the requested estimate."""

    exit_code = 2


class NumericalError(SefdmError, FloatingPointError):
    """Non-finite activations or loss during training or inference."""

    exit_code = 3
