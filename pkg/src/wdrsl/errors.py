"""Exception types raised across the package."""


class DomainError(ValueError):
    """Input outside the domain where a quantity is defined (e.g. non-finite)."""


class ShapeError(ValueError):
    """Array dimensions do not agree."""


class ParseError(ValueError):
    """Malformed LIBSVM input. Carries the 1-based line number."""

    def __init__(self, message, lineno=None):
        self.lineno = lineno
        if lineno is not None:
            message = f"line {lineno}: {message}"
        super().__init__(message)


class MissingReferenceError(RuntimeError):
    """An operation needs a reference solution that was not supplied."""


class DivergenceError(RuntimeError):
    """A solver produced a non-finite or exploding iterate."""
