"""Exception hierarchy shared by all modules."""


class GramintError(Exception):
    """Base class for every error raised by this package."""


class DomainError(GramintError, ValueError):
    """A parameter lies outside the admissible parameter box."""


class ConstructionError(GramintError, ValueError):
    """Inconsistent dimensions or arguments when building an object."""


class IngestionError(GramintError):
    """A system or artifact file could not be read."""


class SolverError(GramintError):
    """A matrix equation could not be solved (singular or unstable pencil)."""


class SizeGuardError(SolverError):
    """Problem too large for a dense solver."""


class ConvergenceError(SolverError):
    """An iterative solver hit its step cap.

    The last relative residual is kept in ``residual``.
    """

    def __init__(self, message, residual):
        super().__init__(message)
        self.residual = residual


class DegenerateSystemError(GramintError):
    """All Hankel singular values vanish."""


class IllConditionedError(GramintError):
    """A retained singular value is too small to be inverted safely."""


class IllDefinedPolarError(GramintError):
    """The polar factor needed by the logarithm map is not unique."""


class OffManifoldError(GramintError):
    """A factor lost full column rank."""


class ExtrapolationError(GramintError, ValueError):
    """Evaluation was requested outside the hull of the training grid."""


class EvaluationError(GramintError):
    """A transfer function could not be evaluated at some frequency."""

    def __init__(self, message, omega=None):
        super().__init__(message)
        self.omega = omega
