"""Exception hierarchy shared across the package."""


class MarkovGFError(Exception):
    """Base class for all package errors."""


class DomainError(MarkovGFError, ValueError):
    """An argument lies outside the domain of a function."""


class DegenerateKernel(DomainError):
    """The switching factor p + q is (numerically) equal to one."""


class NegativeRadicand(DomainError):
    """The saddle-contour radicand is negative at the requested point."""


class AmbiguousClass(MarkovGFError):
    """Two critical-set membership tests passed at the same point."""


class HessianUndefined(MarkovGFError):
    """The loss is not twice differentiable at the requested point."""


class NoBracket(MarkovGFError, RuntimeError):
    """A sign change could not be bracketed for a 1D root solve."""


class EnergyViolation(MarkovGFError):
    """Energy drift along an integrated trajectory exceeded a threshold."""


class NonFinite(MarkovGFError, FloatingPointError):
    """A finite-difference probe returned a non-finite value."""


class DimensionMismatch(MarkovGFError, ValueError):
    """Array shapes in a full-model construction do not agree."""
