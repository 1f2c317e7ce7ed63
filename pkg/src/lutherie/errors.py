"""Exception types raised across the toolchain."""


class LutherieError(Exception):
    """Base class for all errors raised by this package."""


class ValidationError(LutherieError, ValueError):
    """A value violates a documented invariant."""


class NoteParseError(LutherieError, ValueError):
    """A note name does not follow the pitch grammar."""

    def __init__(self, note, token):
        self.note = note
        self.token = token
        super().__init__(f"cannot parse note {note!r}: unexpected token {token!r}")


class DomainError(LutherieError, ValueError):
    """An argument lies outside the domain of an operation."""


class GeometryError(LutherieError, ValueError):
    """Geometry is self-intersecting, degenerate or otherwise unbuildable."""


class InfeasiblePartitionError(LutherieError):
    """A part cannot be split into pieces that fit the build plate."""

    def __init__(self, message, dimension=None):
        self.dimension = dimension
        super().__init__(message)


class FormatError(LutherieError, ValueError):
    """A binary file (STL, WAV) is malformed."""

    def __init__(self, message, offset=None, chunk=None):
        self.offset = offset
        self.chunk = chunk
        where = []
        if chunk is not None:
            where.append(f"chunk {chunk!r}")
        if offset is not None:
            where.append(f"offset {offset}")
        super().__init__(f"{message} ({', '.join(where)})" if where else message)


class NoSignalError(LutherieError):
    """No spectral peak exceeds the detection threshold."""

    def __init__(self, message, string_index=None):
        self.string_index = string_index
        super().__init__(message)


class ConfigError(LutherieError):
    """A project config file could not be parsed."""

    def __init__(self, message, line=None, column=None):
        self.line = line
        self.column = column
        loc = f"line {line}, column {column}: " if line is not None else ""
        super().__init__(f"{loc}{message}")
