"""Exception types shared across the package."""


class CylwaveError(Exception):
    """Base class for all package errors."""


class DomainError(CylwaveError):
    """Input violates a documented precondition."""


class GeometryError(CylwaveError):
    """Cylinder geometry is invalid (overlap, bad radii, ...)."""


class AssemblyError(CylwaveError):
    """Transition-matrix assembly failed (e.g. Bessel normalization zero)."""


class SolverError(CylwaveError):
    """Linear solve failed or the system is too ill-conditioned to trust."""


class FitError(CylwaveError):
    """A model fit is impossible on the given data (e.g. no decay to fit)."""


class RefinementError(CylwaveError):
    """Mode refinement did not converge; carries the best iterate found."""

    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best
