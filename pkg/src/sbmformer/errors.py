"""Exception types shared across the package."""


class ShapeError(ValueError):
    """Operands have incompatible or non-2-D shapes."""


class DomainError(ValueError):
    """A value lies outside the mathematically valid domain."""


class InputError(ValueError):
    """User-supplied data (token ids, config keys, files) is malformed."""


class ConsistencyError(ValueError):
    """A trace and the parameters it is replayed against disagree."""


class CountersDisabledError(RuntimeError):
    """Instrumentation was requested from a forward run without counters."""


class NonFiniteLossError(FloatingPointError):
    """Training produced a NaN/inf loss; carries a diagnostic dump."""

    def __init__(self, message: str, diagnostics: dict | None = None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}
