"""
Exception hierarchy for the numerical modules.

Configuration and precondition problems reuse ValidationError so the CLI can
map them to exit status 2; failed checks derive from CheckFailure (exit 1).
"""

from typing import Any, Optional, Tuple

from utils.validators import ValidationError


class NonlocalError(Exception):
    """Base class for numerical errors."""


class PreconditionError(ValidationError):
    """Experiment input violates a stated precondition."""


class KernelError(NonlocalError):
    """Kernel rejected during assembly or table loading."""

    def __init__(self, message: str, indices: Optional[Tuple[int, ...]] = None) -> None:
        super().__init__(message)
        self.indices = indices


class DimensionError(NonlocalError):
    """Fields or kernels live on different grids."""


class DomainError(NonlocalError):
    """Argument outside the domain where an operation is defined."""


class RangeError(DomainError):
    """Inverse requested outside the range of the nonlinearity."""


class CertificationError(NonlocalError):
    """Claimed dissipativity (or monotonicity, or inverse) failed on samples."""

    def __init__(self, message: str, point: Optional[Tuple[float, float]] = None) -> None:
        super().__init__(message)
        self.point = point


class BlowUpError(NonlocalError):
    """Integration produced non-finite or exploding values."""

    def __init__(self, message: str, t: float) -> None:
        super().__init__(message)
        self.t = t


class ConvergenceError(NonlocalError):
    """Contraction could not be established."""


class IterationError(ConvergenceError):
    """Iteration limit reached before the residual tolerance."""

    def __init__(self, message: str, residual: float) -> None:
        super().__init__(message)
        self.residual = residual


class CapabilityError(NonlocalError):
    """Operation needs a capability (e.g. an inverse) that is not available."""


class SpecError(NonlocalError):
    """Energy tables cannot be built for the given g0."""


class CheckFailure(NonlocalError):
    """A verified property did not hold (CLI exit status 1)."""

    def __init__(self, message: str, report: Any = None) -> None:
        super().__init__(message)
        self.report = report


class OrderingViolation(CheckFailure):
    """Comparison ordering v <= u <= V broken."""


class InvariantEscape(CheckFailure):
    """A sample left the invariant interval."""


class MonotonicityViolation(CheckFailure):
    """Monotone Picard iterates changed direction."""


class GronwallViolation(CheckFailure):
    """Trajectory distance exceeded the Gronwall bound."""
