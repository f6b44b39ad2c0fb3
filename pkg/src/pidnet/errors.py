"""Exception types shared across the package.

The CLI maps these onto its stable exit codes: ConfigError -> 2,
DataFormatError and other I/O failures -> 3, NumericError -> 4,
CheckpointMismatch -> 5.
"""


class ShapeMismatch(ValueError):
    """Operand shapes are incompatible; the message names both shapes."""


class ConfigError(ValueError):
    """Invalid or unknown configuration key/value."""


class DataFormatError(ValueError):
    """Malformed feature file or manifest; carries the byte offset when known."""

    def __init__(self, message: str, offset: int | None = None):
        super().__init__(message if offset is None else f"{message} (at byte offset {offset})")
        self.offset = offset


class NumericError(RuntimeError):
    """Non-finite value where a finite one is required; names the culprit."""


class CheckpointMismatch(ValueError):
    """Checkpoint incompatible with the requested configuration or data."""
