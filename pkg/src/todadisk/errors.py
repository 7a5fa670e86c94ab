"""Exception types shared across the package."""


class TodaDiskError(Exception):
    """Base class for all package errors."""


class DomainError(TodaDiskError, ValueError):
    """A point or field lies outside the domain where a quantity is defined."""


class ConfigurationError(TodaDiskError, ValueError):
    """Parameters violate a documented precondition."""


class SolverError(TodaDiskError, RuntimeError):
    """Newton iteration failed; carries the continuation trace gathered so far."""

    def __init__(self, message, trace=None, iterations=0):
        super().__init__(message)
        self.trace = list(trace or [])
        self.iterations = iterations
