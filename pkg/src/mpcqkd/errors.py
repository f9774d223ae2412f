"""Exception hierarchy shared by all modules."""


class MpcQkdError(Exception):
    """Base class for all package errors."""


class InvalidInput(MpcQkdError, ValueError):
    """A value lies outside its documented domain."""


class ParseError(MpcQkdError):
    """A persisted artifact could not be read.

    ``location`` is a JSON-path style pointer (``$.edges[3].u``) or a
    ``line N`` marker for text formats.
    """

    def __init__(self, message, location="$"):
        super().__init__(f"{location}: {message}")
        self.location = location


class SchemaVersionError(ParseError):
    pass


class FormulationError(MpcQkdError):
    pass


class SolverError(MpcQkdError):
    """Numerical breakdown or exhausted iteration budget inside the LP core."""


class PoolDepleted(MpcQkdError):
    """A key pool cannot supply the requested bytes; nothing was consumed."""

    def __init__(self, label, wanted, available):
        super().__init__(f"pool {label} depleted: need {wanted} bytes, {available} left")
        self.label = label
        self.wanted = wanted
        self.available = available
