"""Exception types shared across the package."""


class DimensionError(ValueError):
    """A point or matrix does not match the expected dimension."""


class DivergenceError(ArithmeticError):
    """Local descent produced a non-finite value or gradient."""

    def __init__(self, message, *, step=None, node=None, round_index=None):
        super().__init__(message)
        self.step = step
        self.node = node
        self.round_index = round_index


class DomainError(ValueError):
    """An argument lies outside the mathematical domain of a routine."""


class NumericFailure(ArithmeticError):
    """A numerical routine failed to produce a trustworthy answer."""


class ZeroMatrixError(ValueError):
    """Every eigenvalue fell below the rank tolerance."""


class UnsupportedAuditError(RuntimeError):
    """The run lacks the distance telemetry needed for a decrement audit."""
