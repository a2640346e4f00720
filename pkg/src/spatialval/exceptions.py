"""Exception types shared across the package.

``InputError`` maps to CLI exit code 2, ``NumericalError`` to exit code 3.
"""


class SpatialValError(Exception):
    """Base class for all package errors."""


class InputError(SpatialValError):
    """Invalid user input: bad shapes, out-of-range values, schema violations."""


class NumericalError(SpatialValError):
    """A numerical routine failed (e.g. a covariance factorization)."""
