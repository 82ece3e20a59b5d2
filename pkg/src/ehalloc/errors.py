"""Exception types shared across the package."""


class EhallocError(Exception):
    """Base class for all package-specific errors."""


class SingularInnovation(EhallocError):
    """Innovation covariance C P C^T + R is numerically singular."""


class InfeasibleAction(EhallocError):
    """Requested transmission energy exceeds the stored battery energy."""


class ZeroLikelihood(EhallocError):
    """Acknowledgment value has zero probability under the feedback model."""


class UnknownState(EhallocError):
    """Conditioning state is not a member of the finite chain's state list."""


class EmptyBelief(EhallocError):
    """All probability mass was pruned from a belief (should be impossible)."""


class GridLookupOutOfRange(EhallocError):
    """Successor state fell outside the tabulated grid."""


class NoConvergence(EhallocError):
    """Relative value iteration did not reach the span tolerance."""

    def __init__(self, iterations: int, span: float):
        self.iterations = iterations
        self.span = span
        super().__init__(
            f"relative value iteration did not converge after {iterations} "
            f"iterations (last span {span:.3e})"
        )


class SchemaError(EhallocError):
    """Configuration document violates the expected schema."""

    def __init__(self, field: str, expected: str, got=None):
        self.field = field
        self.expected = expected
        self.got = got
        detail = f"field '{field}': expected {expected}"
        if got is not None:
            detail += f", got {got!r}"
        super().__init__(detail)


class BoundViolated(EhallocError):
    """Empirical covariance curve is not covered by the fitted bound."""
