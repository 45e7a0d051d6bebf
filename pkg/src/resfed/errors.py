"""Exception hierarchy shared by every module."""


class ResFedError(Exception):
    """Base class for all library errors."""


class ShapeError(ResFedError, ValueError):
    pass


class InvalidArchitectureError(ResFedError, ValueError):
    pass


class InvalidConfigError(ResFedError, ValueError):
    pass


class EmptyDataError(ResFedError, ValueError):
    pass


class EmptyPayloadError(ResFedError, ValueError):
    pass


class InsufficientHistoryError(ResFedError):
    pass


class ProtocolOrderError(ResFedError):
    pass


class CorruptDataError(ResFedError, ValueError):
    pass


class FormatError(ResFedError, ValueError):
    """Malformed input file; ``offset`` is the byte position of the problem."""

    def __init__(self, message: str, offset: int | None = None):
        self.offset = offset
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)


class ConfigError(ResFedError, ValueError):
    """Bad configuration value; carries the dotted key and source line if known."""

    def __init__(self, key: str, message: str, line: int | None = None):
        self.key = key
        self.line = line
        where = f" (line {line})" if line is not None else ""
        super().__init__(f"{key}: {message}{where}")
