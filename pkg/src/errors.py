"""Exception hierarchy for the M-CLP solver."""
from typing import Any, Optional


class MclpError(Exception):
    """Base class for all solver errors."""


class MalformedProblem(MclpError, ValueError):
    """Problem data with inconsistent dimensions or non-finite entries."""


class DimensionMismatch(MalformedProblem):
    """Two objects that must agree in dimension or horizon do not."""


class SupportOutOfRange(MalformedProblem):
    """Support index outside 0..J-1 or 0..K-1."""


class NumericalFailure(MclpError, ArithmeticError):
    """The simplex could not make progress within its pivot tolerance or iteration limit."""


class TOutOfRange(MclpError, ValueError):
    """Evaluation time outside [0, T]."""


class InvalidMeasure(MclpError, ValueError):
    """Measure with negative mass or a malformed partition."""


class LengthMismatch(MclpError, ValueError):
    """Number of values does not match the partition."""


class NotEquidistant(MclpError, ValueError):
    """Operation requires an equidistant partition."""


class InfeasibleWitness(MclpError):
    """Test-LP witness violates its constraints."""


class InfeasiblePrimal(MclpError):
    """The M-CLP has no feasible solution."""

    def __init__(self, message: str, certificate: Optional[Any] = None):
        super().__init__(message)
        self.certificate = certificate


class InfeasibleDual(MclpError):
    """The M-CLP* has no feasible solution."""

    def __init__(self, message: str, certificate: Optional[Any] = None):
        super().__init__(message)
        self.certificate = certificate


class UnboundedPrimal(MclpError):
    """The M-CLP objective is unbounded above."""


class InfeasibleDiscrete(MclpError):
    """Discrete solution violates its dCLP constraints beyond tolerance."""


class InfeasibleMeasure(MclpError):
    """Measure solution violates the M-CLP constraints beyond tolerance."""


class InfeasibleResult(MclpError):
    """Linearized solution is infeasible; breakpoints were not slope-change points."""


class ToleranceNotReached(MclpError):
    """Refinement hit n_max before the certified gap reached the tolerance."""

    def __init__(self, message: str, report: Optional[Any] = None):
        super().__init__(message)
        self.report = report


class NonMonotoneSlope(MclpError):
    """Objective slope increases across rate intervals; input is not optimal."""


class AtomsPresent(MclpError):
    """Solution has atoms in blocks that must be absolutely continuous."""


class ParseError(MclpError):
    """Document is not valid JSON."""


class ProblemValidationError(MclpError, ValueError):
    """Document parsed but failed validation."""
