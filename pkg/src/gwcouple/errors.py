"""Exception hierarchy."""


class GwError(Exception):
    """Base class for all package errors."""


class DomainError(GwError, ValueError):
    """An argument is outside the documented domain."""


class EnumerationCapError(GwError):
    """A request would enumerate more trees than the configured cap allows."""


class ParseError(GwError, ValueError):
    """Malformed tree text form."""

    def __init__(self, message: str, position: int | None = None):
        super().__init__(message)
        self.position = position


class InfeasibleTransportError(GwError):
    """A transport plan with the required marginals does not exist.

    Raised only if the max-flow fails to saturate; for uniform marginals on
    containment pairs this must never happen, so this error indicates a bug.
    """


class DegenerateTestError(GwError):
    """A statistical test collapsed to fewer than two cells."""
