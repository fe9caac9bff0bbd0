"""Exception types shared across the package.

Each maps to one machine-parsable CLI error category (see ``cli``).
"""


class DecopError(Exception):
    """Base class for all package errors."""

    category = "error"


class DimensionError(DecopError):
    """Operand shapes do not conform for an operation."""

    category = "shape"

    def __init__(self, op: str, *shapes):
        super().__init__(f"{op}: shapes do not conform: " + " vs ".join(str(tuple(s)) for s in shapes))


class ContractError(DecopError):
    """A documented precondition of an API was violated."""

    category = "contract"


class ParseError(DecopError):
    """Malformed input file content."""

    category = "data"


class SizeError(DecopError):
    """Input is too small for the requested configuration."""

    category = "data"


class ConfigError(DecopError):
    """Invalid or missing run configuration field."""

    category = "config"


class CheckpointError(DecopError):
    """Checkpoint is malformed or structurally incompatible."""

    category = "checkpoint"


class NumericError(DecopError):
    """Training produced a non-finite value."""

    category = "numeric"
