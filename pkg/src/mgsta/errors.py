"""Exception hierarchy shared by all mgsta modules."""

from __future__ import annotations


class MgstaError(Exception):
    """Base class for every error raised by this package."""


class DimensionError(MgstaError, ValueError):
    """An array does not have the required shape."""


class ContractError(MgstaError, ValueError):
    """An input violates a documented precondition (e.g. symmetry)."""


class SingularMatrixError(MgstaError, ArithmeticError):
    """A matrix is too close to singular to be inverted.

    Attributes:
        det: determinant estimate of the offending matrix (or matrices).
    """

    def __init__(self, message: str, det=None):
        super().__init__(message)
        self.det = det


class SingularityError(MgstaError, ArithmeticError):
    """A controller function was evaluated where it is undefined (x = 0)."""


class DomainError(MgstaError, ValueError):
    """A plant was evaluated outside the region where its model is valid."""


class AssumptionViolation(MgstaError):
    """A structural assumption on the plant fails at a sampled point.

    Attributes:
        which: short name of the violated condition.
        value: offending eigenvalue.
        witness: (t, state) sample where it happened.
    """

    def __init__(self, message: str, which: str, value: float, witness=None):
        super().__init__(message)
        self.which = which
        self.value = value
        self.witness = witness


class CertificateError(MgstaError, ValueError):
    """Lyapunov certificate parameters do not define a positive definite V."""


class DesignSearchError(MgstaError):
    """No (p1, p2) pair satisfying the gain-design inequalities was found.

    Attributes:
        last_failed: names of the inequalities that failed at the last
            candidate examined.
    """

    def __init__(self, message: str, last_failed: list[str]):
        super().__init__(message)
        self.last_failed = last_failed


class DivergenceError(MgstaError):
    """A simulation produced non-finite values.

    Attributes:
        time: simulation time at which divergence was detected.
        trace: partial trace recorded up to that point (may be None).
    """

    def __init__(self, message: str, time: float, trace=None):
        super().__init__(message)
        self.time = time
        self.trace = trace


class InfeasibleError(DesignSearchError):
    """The input-matrix uncertainty is too large for constant-gain design.

    A special case of search failure: no ``(p1, p2)`` can succeed, so the
    grid is not scanned.

    Attributes:
        margin: value of ``gamma1 g_m - gamma4 - 2 sqrt(gamma3 gamma5)``.
    """

    def __init__(self, message: str, margin: float):
        super().__init__(message, ["feasibility"])
        self.margin = margin
