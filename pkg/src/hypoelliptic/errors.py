"""Exception and warning types shared across the package."""


class HypoellipticError(Exception):
    """Base class for errors raised by this package."""


class InvalidSystemError(HypoellipticError, ValueError):
    """A system description violates one or more structural requirements.

    ``violations`` lists each problem separately so callers can report all
    of them at once.
    """

    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


class IndefiniteMatrixError(HypoellipticError, ValueError):
    """A matrix expected to be positive semidefinite is not."""


class SpectrumConvergenceError(HypoellipticError, ArithmeticError):
    """The eigenvalue iteration failed to converge."""


class GuardError(HypoellipticError):
    """A mathematical hypothesis needed by an operation does not hold."""


class NotHypoellipticError(GuardError):
    """The covariance matrix is singular, so no smooth kernel exists."""


class DimensionGuardError(GuardError):
    """Tensor quadrature was requested in too many dimensions."""


class TraceHypothesisWarning(UserWarning):
    """The drift has negative trace, outside the L^p contraction regime."""


class QuadratureWarning(UserWarning):
    """An adaptive quadrature did not reach its requested tolerance."""
