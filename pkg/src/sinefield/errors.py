"""Exception hierarchy shared by every module.

The CLI maps these onto its exit codes: usage/config problems exit 1,
numerical failures exit 2, IO and file-format problems exit 3.
"""


class SineFieldError(Exception):
    """Base class for all library errors."""


class InvalidInputError(SineFieldError, ValueError):
    """An argument violates an operation's precondition."""


class ShapeError(InvalidInputError):
    """Matrix or vector dimensions do not chain."""


class OutOfRangeError(InvalidInputError):
    """A numeric argument falls outside the supported range."""


class ResourceError(SineFieldError):
    """A request exceeds the desk-scale guard (e.g. kernel size)."""


class DivergenceError(SineFieldError, ArithmeticError):
    """Training produced a non-finite loss."""

    def __init__(self, step, loss):
        super().__init__(f"non-finite loss {loss!r} at step {step}")
        self.step = step
        self.loss = loss


class FormatError(SineFieldError):
    """A binary file is malformed; ``offset`` points at the offending byte."""

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class UnsupportedFormatError(FormatError):
    """A well-formed file uses a feature we do not read (names the field)."""

    def __init__(self, field, value, offset=None):
        super().__init__(f"unsupported {field}={value!r}", offset)
        self.field = field
        self.value = value


class ConfigError(SineFieldError):
    """Experiment configuration could not be parsed or validated."""
