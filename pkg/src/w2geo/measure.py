from __future__ import annotations

__all__ = [
    "DiscreteMeasure",
    "MeasureEnsemble",
    "canonicalize",
    "make_measure",
    "dirac",
    "uniform",
    "pushforward",
    "pushforward_ensemble",
    "mixture",
    "make_ensemble",
    "measures_close",
    "total_mass",
]

import logging
from dataclasses import dataclass
from functools import cached_property
from typing import Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from w2geo.config import DEFAULT_TOLERANCES, Tolerances
from w2geo.errors import MeasureError, SpaceMismatchError
from w2geo.geometry import (
    Isometry,
    Point,
    Space,
    map_points,
    pack,
    pairwise_distances,
    point_sort_key,
)

logger = logging.getLogger(__name__)

DEFAULT_MAX_ATOMS = 10_000
_MERGE_BLOCK = 512


# ---------------------------------------------------------------------------
# Data models
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class DiscreteMeasure:
    """Finitely many atoms of one Space with positive weights.

    The constructor only checks structure; :func:`canonicalize` (and
    :func:`make_measure`, which calls it) enforces normalization, merges
    duplicate atoms and fixes the atom order.
    """

    space: Space
    atoms: tuple[Point, ...]
    weights: np.ndarray

    def __post_init__(self) -> None:
        atoms = tuple(self.atoms)
        weights = np.array(self.weights, dtype=float).reshape(-1)
        if not atoms:
            raise MeasureError("a measure needs at least one atom")
        if weights.shape[0] != len(atoms):
            raise MeasureError(
                f"{len(atoms)} atoms but {weights.shape[0]} weights"
            )
        if not np.all(np.isfinite(weights)):
            raise MeasureError(f"weights must be finite, got {weights!r}")
        for p in atoms:
            if p.space != self.space:
                raise SpaceMismatchError(f"atom on {p.space} in a measure on {self.space}")
        weights.setflags(write=False)
        object.__setattr__(self, "atoms", atoms)
        object.__setattr__(self, "weights", weights)

    def __len__(self) -> int:
        return len(self.atoms)

    @cached_property
    def packed(self) -> np.ndarray:
        """Atoms as one packed array (row per atom)."""
        return pack(self.atoms)

    def __repr__(self) -> str:
        return f"DiscreteMeasure({self.space}, {len(self)} atoms)"


@dataclass(frozen=True, eq=False)
class MeasureEnsemble:
    """A weighted list of measures: the discrete Σ λᵢ δ_{μᵢ}."""

    entries: tuple[tuple[float, DiscreteMeasure], ...]

    def __post_init__(self) -> None:
        entries = tuple((float(w), m) for w, m in self.entries)
        if not entries:
            raise MeasureError("an ensemble needs at least one measure")
        weights = np.array([w for w, _ in entries])
        if np.any(weights <= 0):
            raise MeasureError(f"ensemble weights must be positive, got {weights.tolist()!r}")
        if abs(weights.sum() - 1.0) > DEFAULT_TOLERANCES.weight_sum * len(entries):
            raise MeasureError(f"ensemble weights sum to {weights.sum()!r}, expected 1")
        space = entries[0][1].space
        for _, m in entries:
            if m.space != space:
                raise SpaceMismatchError(f"ensemble mixes {space} and {m.space}")
        object.__setattr__(self, "entries", entries)

    def __len__(self) -> int:
        return len(self.entries)

    @property
    def space(self) -> Space:
        return self.entries[0][1].space

    @property
    def weights(self) -> np.ndarray:
        return np.array([w for w, _ in self.entries])

    @property
    def measures(self) -> list[DiscreteMeasure]:
        return [m for _, m in self.entries]


# ---------------------------------------------------------------------------
# Canonical form
# ---------------------------------------------------------------------------


def canonicalize(
    m: DiscreteMeasure,
    renormalize: bool = False,
    tol: Tolerances = DEFAULT_TOLERANCES,
    max_atoms: int = DEFAULT_MAX_ATOMS,
) -> DiscreteMeasure:
    """Return the canonical form of *m*.

    Atoms closer than ``tol.merge`` are merged (weights added), weights are
    normalized to sum to one and atoms are sorted lexicographically by
    component tag then chart coordinates.

    Parameters
    ----------
    renormalize:
        Accept weights of any positive total and rescale them. Without it
        the total may deviate from 1 by at most ``tol.normalization``.
    max_atoms:
        Soft limit on the merged atom count.

    Raises
    ------
    MeasureError
        On a nonpositive weight, a total outside tolerance, or too many atoms.
    """
    weights = np.asarray(m.weights, dtype=float)
    if np.any(weights <= 0):
        bad = weights[weights <= 0]
        raise MeasureError(f"weights must be positive, got {bad.tolist()!r}")
    total = float(weights.sum())
    if not renormalize and abs(total - 1.0) > tol.normalization:
        raise MeasureError(
            f"weights sum to {total!r}; deviation from 1 exceeds {tol.normalization:g} "
            "(pass renormalize=True to rescale)"
        )
    weights = weights / total

    labels = _merge_labels(m, tol.merge)
    groups: dict[int, list[int]] = {}
    for idx, label in enumerate(labels):
        groups.setdefault(int(label), []).append(idx)

    merged: list[tuple[tuple, Point, float]] = []
    for members in groups.values():
        rep = min(members, key=lambda i: point_sort_key(m.atoms[i]))
        merged.append((point_sort_key(m.atoms[rep]), m.atoms[rep], float(weights[members].sum())))
    merged.sort(key=lambda item: item[0])

    if len(merged) > max_atoms:
        raise MeasureError(
            f"measure has {len(merged)} atoms, above the limit of {max_atoms} "
            "(raise max_atoms to override)"
        )
    if len(merged) < len(m):
        logger.debug("Merged %d atoms into %d", len(m), len(merged))

    new_weights = np.array([w for _, _, w in merged])
    new_weights = new_weights / new_weights.sum()
    return DiscreteMeasure(m.space, tuple(p for _, p, _ in merged), new_weights)


def _merge_labels(m: DiscreteMeasure, threshold: float) -> np.ndarray:
    """Connected components of the 'closer than threshold' graph on the atoms."""
    n = len(m)
    if n == 1:
        return np.zeros(1, dtype=int)
    packed = m.packed
    rows: list[np.ndarray] = []
    cols: list[np.ndarray] = []
    for start in range(0, n, _MERGE_BLOCK):
        block = pairwise_distances(packed[start : start + _MERGE_BLOCK], packed, space=m.space)
        r, c = np.nonzero(block <= threshold)
        rows.append(r + start)
        cols.append(c)
    r_all = np.concatenate(rows)
    c_all = np.concatenate(cols)
    graph = coo_matrix((np.ones(r_all.shape[0]), (r_all, c_all)), shape=(n, n))
    _, labels = connected_components(graph, directed=False)
    return labels


# ---------------------------------------------------------------------------
# Constructors
# ---------------------------------------------------------------------------


def make_measure(
    atoms: Sequence[Point],
    weights: Sequence[float] | np.ndarray | None = None,
    renormalize: bool = False,
    max_atoms: int = DEFAULT_MAX_ATOMS,
    tol: Tolerances = DEFAULT_TOLERANCES,
) -> DiscreteMeasure:
    """Canonical measure on *atoms*; uniform weights when *weights* is None."""
    atoms = list(atoms)
    if not atoms:
        raise MeasureError("a measure needs at least one atom")
    if weights is None:
        weights = np.full(len(atoms), 1.0 / len(atoms))
    raw = DiscreteMeasure(atoms[0].space, tuple(atoms), weights)
    return canonicalize(raw, renormalize=renormalize, tol=tol, max_atoms=max_atoms)


def dirac(p: Point) -> DiscreteMeasure:
    return DiscreteMeasure(p.space, (p,), np.array([1.0]))


def uniform(atoms: Sequence[Point], max_atoms: int = DEFAULT_MAX_ATOMS) -> DiscreteMeasure:
    return make_measure(atoms, None, max_atoms=max_atoms)


def total_mass(m: DiscreteMeasure) -> float:
    return float(m.weights.sum())


def make_ensemble(
    measures: Sequence[DiscreteMeasure],
    weights: Sequence[float] | np.ndarray | None = None,
    renormalize: bool = False,
    tol: Tolerances = DEFAULT_TOLERANCES,
) -> MeasureEnsemble:
    """Ensemble Σ λᵢ δ_{μᵢ}; uniform λ when *weights* is None."""
    measures = list(measures)
    if not measures:
        raise MeasureError("an ensemble needs at least one measure")
    lam = (
        np.full(len(measures), 1.0 / len(measures))
        if weights is None
        else np.asarray(weights, dtype=float)
    )
    if lam.shape[0] != len(measures):
        raise MeasureError(f"{len(measures)} measures but {lam.shape[0]} weights")
    if np.any(lam <= 0):
        raise MeasureError(f"ensemble weights must be positive, got {lam.tolist()!r}")
    if not renormalize and abs(lam.sum() - 1.0) > tol.normalization:
        raise MeasureError(f"ensemble weights sum to {lam.sum()!r}, expected 1")
    lam = lam / lam.sum()
    return MeasureEnsemble(tuple(zip(lam.tolist(), measures)))


# ---------------------------------------------------------------------------
# Transformations
# ---------------------------------------------------------------------------


def pushforward(g: Isometry, m: DiscreteMeasure, tol: Tolerances = DEFAULT_TOLERANCES) -> DiscreteMeasure:
    """g_#m: atoms mapped by *g*, weights unchanged, canonical form."""
    if g.space != m.space:
        raise SpaceMismatchError(f"isometry of {g.space} pushed a measure on {m.space}")
    mapped = DiscreteMeasure(m.space, tuple(map_points(g, m.atoms)), m.weights)
    return canonicalize(mapped, tol=tol, max_atoms=max(len(m), DEFAULT_MAX_ATOMS))


def pushforward_ensemble(g: Isometry, ens: MeasureEnsemble) -> MeasureEnsemble:
    return MeasureEnsemble(tuple((w, pushforward(g, m)) for w, m in ens.entries))


def mixture(ens: MeasureEnsemble, tol: Tolerances = DEFAULT_TOLERANCES) -> DiscreteMeasure:
    """Linear barycenter Σ λᵢ μᵢ, realized atomwise and canonicalized."""
    atoms: list[Point] = []
    weights: list[np.ndarray] = []
    for lam, m in ens.entries:
        atoms.extend(m.atoms)
        weights.append(lam * m.weights)
    raw = DiscreteMeasure(ens.space, tuple(atoms), np.concatenate(weights))
    return canonicalize(raw, tol=tol, max_atoms=max(len(atoms), DEFAULT_MAX_ATOMS))


def measures_close(
    a: DiscreteMeasure,
    b: DiscreteMeasure,
    tol: float = DEFAULT_TOLERANCES.merge,
    weight_tol: float = DEFAULT_TOLERANCES.merge,
) -> bool:
    """Order-free equality of two measures up to atom and weight tolerances."""
    if a.space != b.space or len(a) != len(b):
        return False
    dist = pairwise_distances(a.packed, b.packed, space=a.space)
    rows, cols = linear_sum_assignment(dist)
    if np.max(dist[rows, cols]) > tol:
        return False
    return bool(np.max(np.abs(a.weights[rows] - b.weights[cols])) <= weight_tol)
