"""Exception types shared across the package."""


class ConfigError(ValueError):
    """Invalid or inconsistent configuration (CLI exit code 2)."""


class ContractError(ValueError):
    """An operation was called outside its contract (e.g. stepping a terminal state)."""


class InvalidParameterError(ValueError):
    """Physical parameters produced a non-finite or impossible quantity."""


class ZeroCoverageError(InvalidParameterError):
    """Link budget leaves no ground coverage (negative radicand in the radius formula)."""


class TrainingDivergedError(ArithmeticError):
    """A gradient step produced a non-finite loss or parameter."""


class CheckpointError(ValueError):
    """Base class for checkpoint I/O failures."""


class CheckpointMagicError(CheckpointError):
    """File does not start with the expected magic string."""


class CheckpointVersionError(CheckpointError):
    """Unsupported checkpoint format version."""


class CheckpointTruncatedError(CheckpointError):
    """File ended before all declared parameters were read."""


class IncompatibleCheckpointError(CheckpointError):
    """Checkpoint metadata does not match the requested environment shape."""
