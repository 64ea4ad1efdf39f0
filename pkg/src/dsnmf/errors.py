"""Exception types raised across the package."""


class DSNMFError(Exception):
    """Base class for all package errors."""


class InvalidInputError(DSNMFError, ValueError):
    """Input violates a documented precondition."""


class ShapeError(DSNMFError, ValueError):
    """Matrix dimensions do not chain as required."""


class NumericError(DSNMFError, ArithmeticError):
    """A numerical routine failed (non-finite values, SVD failure, divergence)."""

    def __init__(self, message, iteration=None):
        if iteration is not None:
            message = f"{message} (iteration {iteration})"
        super().__init__(message)
        self.iteration = iteration


class ParseError(DSNMFError, ValueError):
    """A file could not be parsed."""


class CorruptArchiveError(DSNMFError):
    """A model archive disagrees with its manifest or is missing files."""


class UnsupportedVersionError(DSNMFError):
    """A model archive was written with an unknown format version."""
