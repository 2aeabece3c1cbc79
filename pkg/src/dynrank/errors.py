"""Exception types shared across the package.

The CLI maps these onto process exit codes: validation problems exit 2,
numerical failures exit 3.
"""

from __future__ import annotations


class DynrankError(Exception):
    """Base class for package-specific errors."""


class ValidationError(DynrankError, ValueError):
    """Invalid input data or arguments: schema violations, domain errors,
    broken type invariants."""


class CapacityError(ValidationError):
    """An exact computation was requested above its configured cap."""


class NumericalError(DynrankError, RuntimeError):
    """Optimization or linear algebra failed: non-convergence, singular
    information matrix, non-finite objective."""

    def __init__(self, message: str, *, payload: object = None) -> None:
        super().__init__(message)
        self.payload = payload
