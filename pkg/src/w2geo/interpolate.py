from __future__ import annotations

__all__ = [
    "VectorField",
    "MeasurePath",
    "ConvexityReport",
    "default_grid",
    "zero_field",
    "field_from_coupling",
    "displacement_interpolant",
    "displacement_path",
    "quasi_geodesic",
    "linear_path",
    "convexity_certificate",
]

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Literal, Sequence

import numpy as np
import pandas as pd

from w2geo.config import DEFAULT_TOLERANCES, Tolerances
from w2geo.errors import MalformedInputError, PreconditionError, SpaceMismatchError
from w2geo.geometry import TangentVector, distance, exp, geodesic_point, log, scale, zero_vector
from w2geo.measure import DiscreteMeasure, canonicalize, make_ensemble, mixture
from w2geo.transport import Coupling

logger = logging.getLogger(__name__)

Provenance = Literal["displacement", "quasi-geodesic", "linear"]

DEFAULT_GRID_POINTS = 11


# ---------------------------------------------------------------------------
# Data models
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class VectorField:
    """One tangent vector per atom of ``measure``, in atom order."""

    measure: DiscreteMeasure
    vectors: tuple[TangentVector, ...]

    def __post_init__(self) -> None:
        vectors = tuple(self.vectors)
        if len(vectors) != len(self.measure):
            raise MalformedInputError(
                f"field has {len(vectors)} vectors for {len(self.measure)} atoms"
            )
        for atom, v in zip(self.measure.atoms, vectors):
            if v.space != self.measure.space:
                raise SpaceMismatchError("field vector on a different space than its measure")
            if v.base is not atom and distance(v.base, atom) > DEFAULT_TOLERANCES.merge:
                raise MalformedInputError("field vector is not anchored at its atom")
        object.__setattr__(self, "vectors", vectors)

    def __len__(self) -> int:
        return len(self.vectors)


@dataclass(frozen=True, eq=False)
class MeasurePath:
    """Measures sampled on an increasing grid of times in [0, 1]."""

    grid: np.ndarray
    measures: tuple[DiscreteMeasure, ...]
    provenance: Provenance

    def __post_init__(self) -> None:
        grid = np.array(self.grid, dtype=float).reshape(-1)
        measures = tuple(self.measures)
        if grid.shape[0] != len(measures):
            raise MalformedInputError(f"{grid.shape[0]} times but {len(measures)} measures")
        if grid.shape[0] < 2 or grid[0] != 0.0 or grid[-1] != 1.0:
            raise MalformedInputError("path grid must start at 0 and end at 1")
        if np.any(np.diff(grid) <= 0):
            raise MalformedInputError("path grid must be strictly increasing")
        for m in measures:
            if m.space != measures[0].space:
                raise SpaceMismatchError("path measures live on different spaces")
        grid.setflags(write=False)
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "measures", measures)

    def __len__(self) -> int:
        return len(self.measures)

    def to_frame(self) -> pd.DataFrame:
        """Long table: one row per (t, atom) with weight, tag and chart columns."""
        width = max(len(p.chart) for m in self.measures for p in m.atoms)
        records = []
        for t, m in zip(self.grid, self.measures):
            for idx, (p, w) in enumerate(zip(m.atoms, m.weights)):
                row = {"t": float(t), "atom": idx, "weight": float(w), "tag": p.tag or ""}
                chart = list(p.chart) + [np.nan] * (width - len(p.chart))
                row.update({f"x{k}": float(v) for k, v in enumerate(chart)})
                records.append(row)
        return pd.DataFrame.from_records(records)

    def to_csv(self, path: str | Path) -> None:
        self.to_frame().to_csv(path, index=False)

    def to_dict(self) -> dict:
        from w2geo.schema import measure_to_dict

        return {
            "provenance": self.provenance,
            "grid": self.grid.tolist(),
            "measures": [measure_to_dict(m) for m in self.measures],
        }


@dataclass
class ConvexityReport:
    """Second-difference test of a sampled function."""

    convex: bool
    worst_violation: float  # smallest second difference, signed
    location: float  # grid time of the worst second difference
    second_differences: list[float] = field(default_factory=list)


# ---------------------------------------------------------------------------
# Fields and grids
# ---------------------------------------------------------------------------


def default_grid(n: int = DEFAULT_GRID_POINTS) -> np.ndarray:
    if n < 2:
        raise PreconditionError(f"a grid needs at least 2 points, got {n!r}")
    return np.linspace(0.0, 1.0, n)


def zero_field(m: DiscreteMeasure) -> VectorField:
    return VectorField(m, tuple(zero_vector(p) for p in m.atoms))


def field_from_coupling(c: Coupling, tie_break: bool = False) -> VectorField:
    """Displacement field V(xᵢ) = log(xᵢ, yⱼ) of an assignment-type coupling."""
    if not c.is_assignment:
        raise PreconditionError("coupling splits mass; it has no single-valued displacement field")
    vectors: list[TangentVector | None] = [None] * len(c.source)
    for i, j, _ in c.entries:
        vectors[i] = log(c.source.atoms[i], c.target.atoms[j], tie_break=tie_break)
    return VectorField(c.source, tuple(vectors))  # type: ignore[arg-type]


# ---------------------------------------------------------------------------
# Interpolation
# ---------------------------------------------------------------------------


def displacement_interpolant(
    c: Coupling, t: float, tie_break: bool = False, tol: Tolerances = DEFAULT_TOLERANCES
) -> DiscreteMeasure:
    """Push the coupling forward along geodesics to time *t*.

    Each entry (i, j, m) contributes the atom ``geodesic_point(xᵢ, yⱼ, t)``
    with weight ``m``, so a mass-splitting plan yields more atoms than the
    source has.
    """
    if not 0.0 <= t <= 1.0:
        raise PreconditionError(f"t must lie in [0, 1], got {t!r}")
    if t == 0.0:
        return canonicalize(c.source, tol=tol)
    if t == 1.0:
        return canonicalize(c.target, tol=tol)
    atoms = tuple(
        geodesic_point(c.source.atoms[i], c.target.atoms[j], t, tie_break=tie_break, tol=tol)
        for i, j, _ in c.entries
    )
    raw = DiscreteMeasure(c.source.space, atoms, c.mass)
    return canonicalize(raw, tol=tol, max_atoms=max(len(atoms), 10_000))


def displacement_path(
    c: Coupling,
    grid: Sequence[float] | np.ndarray | None = None,
    tie_break: bool = False,
    tol: Tolerances = DEFAULT_TOLERANCES,
) -> MeasurePath:
    grid = default_grid() if grid is None else np.asarray(grid, dtype=float)
    measures = tuple(displacement_interpolant(c, float(t), tie_break=tie_break, tol=tol) for t in grid)
    return MeasurePath(grid, measures, "displacement")


def _same_atoms(a: DiscreteMeasure, b: DiscreteMeasure, tol: float) -> bool:
    if a.space != b.space or len(a) != len(b):
        return False
    return all(distance(p, q) <= tol for p, q in zip(a.atoms, b.atoms))


def quasi_geodesic(
    mu: DiscreteMeasure,
    V: VectorField,
    grid: Sequence[float] | np.ndarray | None = None,
    tol: Tolerances = DEFAULT_TOLERANCES,
) -> MeasurePath:
    """Path t ↦ (x ↦ exp_x(t V(x)))_# μ on *grid*."""
    if V.measure is not mu and not _same_atoms(V.measure, mu, tol.merge):
        raise MalformedInputError("vector field does not belong to this measure")
    grid = default_grid() if grid is None else np.asarray(grid, dtype=float)
    measures = []
    for t in grid:
        atoms = tuple(exp(scale(v, float(t)), tol=tol) for v in V.vectors)
        raw = DiscreteMeasure(mu.space, atoms, mu.weights)
        measures.append(canonicalize(raw, tol=tol, max_atoms=max(len(atoms), 10_000)))
    return MeasurePath(grid, tuple(measures), "quasi-geodesic")


def linear_path(
    mu: DiscreteMeasure,
    nu: DiscreteMeasure,
    grid: Sequence[float] | np.ndarray | None = None,
    tol: Tolerances = DEFAULT_TOLERANCES,
) -> MeasurePath:
    """Mixture interpolation (1 − t) μ + t ν."""
    if mu.space != nu.space:
        raise SpaceMismatchError(f"cannot interpolate {mu.space} and {nu.space}")
    grid = default_grid() if grid is None else np.asarray(grid, dtype=float)
    measures = []
    for t in grid:
        if t == 0.0:
            measures.append(canonicalize(mu, tol=tol))
        elif t == 1.0:
            measures.append(canonicalize(nu, tol=tol))
        else:
            measures.append(mixture(make_ensemble([mu, nu], [1.0 - t, t]), tol=tol))
    return MeasurePath(grid, tuple(measures), "linear")


# ---------------------------------------------------------------------------
# Convexity certificate
# ---------------------------------------------------------------------------


def convexity_certificate(
    values: Sequence[float] | np.ndarray,
    grid: Sequence[float] | np.ndarray | None = None,
    tol: float = DEFAULT_TOLERANCES.convexity,
) -> ConvexityReport:
    """Check that every second difference of *values* is at least ``-tol``.

    Raises
    ------
    PreconditionError
        With fewer than three values or a non-uniform grid.
    """
    vals = np.asarray(values, dtype=float).reshape(-1)
    if vals.shape[0] < 3:
        raise PreconditionError(f"need at least 3 values, got {vals.shape[0]}")
    ts = default_grid(vals.shape[0]) if grid is None else np.asarray(grid, dtype=float)
    if ts.shape != vals.shape:
        raise PreconditionError("grid and values differ in length")
    steps = np.diff(ts)
    if not np.allclose(steps, steps[0], rtol=1e-9, atol=0.0):
        raise PreconditionError("convexity certificate needs a uniform grid")

    second = vals[:-2] - 2 * vals[1:-1] + vals[2:]
    worst = int(np.argmin(second))
    report = ConvexityReport(
        convex=bool(second[worst] >= -tol),
        worst_violation=float(second[worst]),
        location=float(ts[worst + 1]),
        second_differences=second.tolist(),
    )
    if not report.convex:
        logger.debug(
            "Convexity violated: second difference %.3g at t=%.3f", report.worst_violation, report.location
        )
    return report
