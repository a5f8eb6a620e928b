from __future__ import annotations

__all__ = [
    "W2GeoError",
    "SpaceMismatchError",
    "CutLocusError",
    "BranchAmbiguityError",
    "MalformedInputError",
    "MeasureError",
    "IsometryError",
    "ConvergenceError",
    "PreconditionError",
]

from typing import Any


class W2GeoError(Exception):
    """Base class for every error raised by w2geo."""


class SpaceMismatchError(W2GeoError, ValueError):
    """Two objects that must live on the same Space do not."""


class CutLocusError(W2GeoError, ValueError):
    """The minimizing geodesic between two points is not unique.

    ``pair`` holds the two offending points so callers can decide on a
    tie-break themselves.
    """

    def __init__(self, message: str, pair: tuple[Any, Any] | None = None) -> None:
        super().__init__(message)
        self.pair = pair


class BranchAmbiguityError(W2GeoError, ValueError):
    """A geodesic direction is undefined at a gluing point."""


class MalformedInputError(W2GeoError, ValueError):
    """Input violates a structural invariant (shape, sign, normalization)."""


class MeasureError(MalformedInputError):
    """A DiscreteMeasure or MeasureEnsemble is invalid."""


class IsometryError(MalformedInputError):
    """An isometry representation is not distance preserving."""


class ConvergenceError(W2GeoError, RuntimeError):
    """An iterative solver stopped before meeting its tolerance."""

    def __init__(self, message: str, iterations: int = 0, residual: float | None = None) -> None:
        super().__init__(message)
        self.iterations = iterations
        self.residual = residual


class PreconditionError(W2GeoError, ValueError):
    """An operation was called outside its documented domain."""
