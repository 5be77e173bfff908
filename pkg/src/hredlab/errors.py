"""Exception types shared across the package."""


class HredError(Exception):
    """Base class for all package errors."""


class DimensionError(HredError, ValueError):
    """Operand shapes are incompatible."""


class ContractError(HredError, ValueError):
    """A precondition of an operation was violated."""


class DegenerateInputError(HredError, ValueError):
    """Input admits no well-defined result (e.g. every position masked)."""


class CheckpointError(HredError):
    """Checkpoint file is corrupt, truncated, or of an unknown version."""
