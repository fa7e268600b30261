"""Exception types shared across the package."""


class ShapeError(ValueError):
    """Operand shapes are incompatible for the requested operation."""


class ContractError(ValueError):
    """A documented precondition was violated by the caller."""


class ConfigError(ValueError):
    """Invalid configuration value or unknown configuration key."""


class SelectionError(ValueError):
    """An acquisition request named ids that are not selectable."""


class ParseError(ValueError):
    """A data file is malformed.  Carries the byte offset of the defect."""

    def __init__(self, message: str, offset: int | None = None):
        if offset is not None:
            message = f"{message} (byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class StateConflict(RuntimeError):
    """The labeling session is not in a state that allows the request."""
