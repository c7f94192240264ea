"""Exception types shared across the solver modules."""


class MobrelayError(Exception):
    """Base class for all package errors."""


class DimensionError(MobrelayError, ValueError):
    """Sequence lengths do not match the slot structure."""


class DomainError(MobrelayError, ValueError):
    """A numeric argument is outside its admissible domain."""


class PreconditionError(MobrelayError, ValueError):
    """A documented caller-side precondition does not hold."""


class UnboundedWaterLevel(MobrelayError, ValueError):
    """All water-filling weights are zero but the budget is positive."""


class InvalidDualState(MobrelayError, ValueError):
    """Dual multipliers outside the region where the dual is bounded."""


class NumericalFailure(MobrelayError, RuntimeError):
    """An iterative solver lost the numerical properties it relies on."""


class InfeasibleProblem(MobrelayError, RuntimeError):
    """Phase-1 certified that no strictly feasible point exists."""


class CaseInconsistency(MobrelayError, RuntimeError):
    """Primal recovery contradicts the detected bottleneck case."""
