"""Exception hierarchy for the Maslov P-index toolkit."""

from typing import Any, Dict, Optional, Sequence


class MaslovError(Exception):
    """Base class for every error raised by the toolkit."""


class DimensionMismatch(MaslovError):
    pass


# Boundary construction
class NotOrthogonal(MaslovError):
    pass


class NotSymplectic(MaslovError):
    pass


class LogFailed(MaslovError):
    pass


class PreconditionViolated(MaslovError):
    pass


# Dense kernels
class NotSymmetric(MaslovError):
    pass


class NoConvergence(MaslovError):
    pass


class MatrixOverflow(MaslovError):
    pass


# Discretization accuracy
class AccuracyNotReached(MaslovError):
    pass


class IntegrationError(AccuracyNotReached):
    """The integrated monodromy left the symplectic group (det(gamma) != 1)."""


class QuadratureNotConverged(MaslovError):
    pass


class NotConverged(MaslovError):
    pass


class NullityMismatch(MaslovError):
    def __init__(self, galerkin: int, floquet: int, message: str = ""):
        self.galerkin = galerkin
        self.floquet = floquet
        super().__init__(message or f"Galerkin nullity {galerkin} != Floquet nullity {floquet}")


class IdentityViolated(MaslovError):
    def __init__(self, s: float, pairs: Dict[str, Any], message: str = ""):
        self.s = s
        self.pairs = pairs
        super().__init__(message or f"perturbation identity violated at s={s}: {pairs}")


class ShiftInvalid(MaslovError):
    pass


class DualMismatch(MaslovError):
    def __init__(self, lhs: int, rhs: int, message: str = ""):
        self.lhs = lhs
        self.rhs = rhs
        super().__init__(message or f"relative index {lhs} != dual difference {rhs}")


class OffsetNotConstant(MaslovError):
    def __init__(self, offsets: Sequence[int]):
        self.offsets = list(offsets)
        super().__init__(f"dual offset varies across coefficient paths: {self.offsets}")


class OrderingViolated(MaslovError):
    def __init__(self, margin: float, message: str = ""):
        self.margin = margin
        super().__init__(message or f"paths are not strictly ordered (min eigenvalue margin {margin:.3e})")


class UnresolvedCrossing(MaslovError):
    pass


class TheoremMismatch(MaslovError):
    def __init__(self, lhs: int, rhs: int, message: str = ""):
        self.lhs = lhs
        self.rhs = rhs
        super().__init__(message or f"crossing sum {lhs} != index difference {rhs}")


# Nonlinear problem
class Inconsistent(MaslovError):
    pass


class BlowUp(MaslovError):
    pass


class EquivarianceBroken(MaslovError):
    pass


# Problem files
class ProblemParseError(MaslovError):
    def __init__(self, message: str, line: Optional[int] = None, column: Optional[int] = None):
        self.line = line
        self.column = column
        where = f" (line {line}, column {column})" if line is not None else ""
        super().__init__(f"{message}{where}")
