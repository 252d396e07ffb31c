"""Exception types shared across the package."""


class PairQfiError(Exception):
    """Base class for all package errors."""


class ConfigError(PairQfiError, ValueError):
    """Invalid user input: quadrature orders, indices, config keys."""


class QuadratureConvergenceError(PairQfiError):
    """The aperture integral is under-resolved at the current quadrature orders."""

    def __init__(self, message, est_error=None):
        super().__init__(message)
        self.est_error = est_error


class DegenerateOverlapError(PairQfiError):
    """1 - delta**2 is too small for the two-state eigenbasis to be well defined."""

    def __init__(self, message, delta=None):
        super().__init__(message)
        self.delta = delta


class SingularBlockError(PairQfiError):
    """A QFI or FI block is not positive definite and cannot be inverted."""

    def __init__(self, message, block=None, min_eigenvalue=None):
        super().__init__(message)
        self.block = block
        self.min_eigenvalue = min_eigenvalue


class ConsistencyError(PairQfiError):
    """Two independent evaluation routes disagree beyond tolerance."""
