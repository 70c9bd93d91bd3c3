"""Exception types shared across the package."""


class HybridQError(Exception):
    """Base class for all package errors."""


class InvalidArgument(HybridQError, ValueError):
    pass


class DimensionMismatch(HybridQError, ValueError):
    pass


class NotHermitian(HybridQError, ValueError):
    pass


class IntegrationError(HybridQError, RuntimeError):
    """Raised when an evolution cannot meet its tolerance or invariants.

    ``diagnostics`` carries whatever the integrator knew at the point of
    failure (time reached, function evaluations, offending invariant).
    """

    def __init__(self, message, **diagnostics):
        super().__init__(message)
        self.diagnostics = diagnostics

    def __str__(self):
        base = super().__str__()
        if not self.diagnostics:
            return base
        extra = ", ".join(f"{k}={v!r}" for k, v in self.diagnostics.items())
        return f"{base} ({extra})"


class AmbiguousSteadyState(HybridQError, RuntimeError):
    def __init__(self, null_dimension):
        super().__init__(
            f"Liouvillian null space has dimension {null_dimension}; "
            "steady state is not unique")
        self.null_dimension = null_dimension
