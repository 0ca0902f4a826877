"""Exception hierarchy shared by every srtlab module."""


class SRTLabError(Exception):
    """Base class for all srtlab errors."""


class ConfigurationError(SRTLabError, ValueError):
    """Invalid law, weight or experiment parameters."""


class ConstructionError(SRTLabError, ValueError):
    """A law or scale could not be built from otherwise valid input."""


class PreconditionError(SRTLabError, ValueError):
    """An operation was called outside its documented domain."""


class DomainError(SRTLabError, ValueError):
    """A quantity is undefined for the requested parameters."""


class RangeError(SRTLabError, IndexError):
    """A query falls outside a computed horizon.

    ``required`` carries the horizon that would have been sufficient, when known.
    """

    def __init__(self, message: str, required: int | None = None):
        super().__init__(message)
        self.required = required


class ResourceError(SRTLabError, MemoryError):
    """A computation would exceed the configured memory budget."""


class NumericalError(SRTLabError, ArithmeticError):
    """Quadrature or iteration failed to meet its tolerance."""

    def __init__(self, message: str, diagnostics: dict | None = None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}
