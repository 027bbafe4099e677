"""Exception hierarchy shared by the solvers, generators and CLI."""


class ResShareError(Exception):
    """Base class for all errors raised by this package."""


class InputError(ResShareError, ValueError):
    """Invalid parameters or malformed instance data."""


class ContractViolation(ResShareError):
    """A block oracle returned something outside its contract."""


class InfeasibleBlockError(ContractViolation):
    """A block has no feasible allocation for the requested query."""


class CallCapExceeded(ResShareError):
    """A single phase issued more oracle calls than the configured cap.

    This is the loud failure for instances whose optimum is far above the
    scale the solver was run at.
    """


class UnsupportedInstanceError(ResShareError):
    """The instance is outside the class a routine is guarded for."""


class InternalInvariantError(ResShareError):
    """An invariant that the analysis guarantees was observed to fail."""


class DegenerateInstance(ResShareError):
    """The all-zero allocation is optimal (the optimum value is 0)."""

    def __init__(self, message, zero_solution=None):
        super().__init__(message)
        self.zero_solution = zero_solution
