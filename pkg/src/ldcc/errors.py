"""Exception types shared across the package.

The CLI maps these onto exit codes: bad flag values are usage errors (2),
malformed or mismatched inputs are data errors (3), and failures of the
numerics are numeric errors (4).
"""


class DomainError(ValueError):
    """A numeric argument lies outside a function's domain."""


class FormatError(ValueError):
    """A file does not conform to its on-disk format."""

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class CheckpointError(ValueError):
    """A model checkpoint is malformed or internally inconsistent."""


class DataError(ValueError):
    """Inputs are well-formed but mutually inconsistent (ids, dimensions)."""


class ModelError(ValueError):
    """Model parameters are invalid (shapes, positivity, definiteness)."""


class NumericError(ArithmeticError):
    """A computation produced values it never should on valid inputs."""
