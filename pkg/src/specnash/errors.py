"""Exception types shared across the package."""


class InvalidInputError(ValueError):
    """Input violates a documented precondition or invariant."""


class InfeasibleWaterfillError(RuntimeError):
    """The power budget cannot be met by any feasible allocation."""


class NumericFailureError(RuntimeError):
    """A numerical routine produced non-finite values or failed to converge."""
