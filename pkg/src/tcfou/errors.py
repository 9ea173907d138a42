"""Exception hierarchy shared by all tcfou modules."""


class TcfouError(Exception):
    """Base class for every error raised by the toolkit."""


class DomainError(TcfouError, ValueError):
    """An argument lies outside the domain where a quantity is defined."""


class ValidationError(DomainError):
    """Invalid user input (CLI arguments, config files, model strings)."""


class UnsupportedModelError(TcfouError, ValueError):
    """The requested operation is not available for this subordinator model."""


class NonConvergenceError(TcfouError, ArithmeticError):
    """A quadrature, series or truncation sequence failed to reach tolerance."""


class InversionError(NonConvergenceError):
    """A numerical Laplace inversion failed its internal consistency check."""


class PrecisionError(InversionError):
    """Extended-precision arithmetic lost too many digits to be trusted."""


class DivergenceError(NonConvergenceError):
    """An integral diverges, e.g. a mixture at x = 0 when E[E(t)^-H] is infinite."""


class GridError(DomainError):
    """A sampling grid is too coarse or inconsistent for the requested operation."""


class SingularKernelWarning(UserWarning):
    """The memory kernel varies too fast to be resolved on the given grid."""
