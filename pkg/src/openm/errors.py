"""Exception types raised by the library."""


class OpenMError(Exception):
    """Base class for all errors raised by :mod:`openm`."""


class DimensionMismatch(OpenMError, ValueError):
    pass


class SingularKKT(OpenMError, ArithmeticError):
    """The KKT block matrix is singular or numerically so."""


class RankDeficientConstraint(OpenMError, ValueError):
    """The constraint matrix does not have full row rank."""


class SingularReducedHessian(OpenMError, ArithmeticError):
    pass


class InfeasibleInput(OpenMError, ValueError):
    """A point handed to a feasible-start routine violates the constraint."""


class NoConvergence(OpenMError, RuntimeError):
    pass


class ConstraintDriftError(OpenMError, ValueError):
    """OEN-M was asked to run on a sequence whose constraints change."""


class NonFiniteIterate(OpenMError, FloatingPointError):
    pass


class MissingOptima(OpenMError, ValueError):
    pass


class DegenerateConstants(OpenMError, ValueError):
    """Bound denominators vanish, e.g. ``h <= 2 * L * gamma``."""


class DisconnectedNetwork(OpenMError, ValueError):
    pass
