"""Exception types raised across the package."""


class DomainError(ValueError):
    """An argument lies outside the domain where a formula is defined."""


class StabilityError(DomainError):
    """The shaper cannot keep up with arrivals (on-time g <= p * tau)."""


class DegenerateInputError(DomainError):
    """Arrival probability at an endpoint where a formula divides by zero."""


class NonDifferentiableError(DomainError):
    """Derivative requested on the kink c = 2p of the waiting-time surface."""


class StraddleError(DomainError):
    """A finite-difference stencil crosses the kink c = 2p."""


class InfeasibleProblemError(RuntimeError):
    """No feasible starting point exists for the allocation problem."""
