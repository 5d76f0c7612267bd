"""Exception types shared across the package."""


class DiffkernelsError(Exception):
    """Base class for all errors raised by this package."""


class EllipticityError(DiffkernelsError):
    """A coefficient field is not strictly elliptic where required."""

    def __init__(self, message, x=None):
        super().__init__(message)
        self.x = x


class ResourceLimitError(DiffkernelsError):
    """A requested computation exceeds the configured size guard."""


class StabilityError(DiffkernelsError):
    """An explicit time step violates its stability constraint."""


class ConsistencyError(DiffkernelsError):
    """An internal cross-check (mass, positivity, dual-route identity)
    failed beyond its tolerance, signalling an inconsistent result."""
