"""Exception types raised across the package."""


class EigenSplineError(Exception):
    """Base class for all package errors."""


class ArgumentError(EigenSplineError, ValueError):
    """Invalid argument: out-of-domain point, bad rank, bad grid spec."""


class DegenerateDesignError(EigenSplineError):
    """The null-space matrix T is not of full column rank."""


class NumericalError(EigenSplineError, ArithmeticError):
    """A factorization or solve broke down."""


class RankError(ArgumentError):
    """Requested rank exceeds the number of usable (positive) modes."""


class ZeroEigenvalueError(NumericalError):
    """Eigenfunction requested for a zero eigenvalue."""


class UnsupportedKernelError(EigenSplineError):
    """Operation needs a kernel capability that is not available."""


class CacheFormatError(EigenSplineError):
    """Cache byte stream has the wrong magic bytes or version."""


class CacheCorruptionError(CacheFormatError):
    """Cache byte stream is truncated or fails its checksum."""


class InvalidFitError(EigenSplineError):
    """A fit result lacks what is needed to predict."""


class SelectionError(EigenSplineError):
    """Smoothing parameter selection failed."""
