"""w2geo.frechet — Fréchet means, the variance functional and its first variation.

The minimizer of y ↦ Σ wᵢ d²(xᵢ, y) is found three ways:

* ``euclidean``: the weighted average, in closed form.
* ``hyperbolic``: Karcher descent y ← exp_y(step · Σ wᵢ log(y, xᵢ)) from the
  cheapest atom. The minimizer is unique and descent must reach the residual
  tolerance.
* ``sphere``, ``flat_cylinder``, ``balloon_string``: the objective is
  evaluated on a brute-force grid, the best well-separated grid points are
  refined by the same descent and the lowest value wins. Several minima with
  equal value are reported through ``multiple`` / ``alternatives``; for
  these spaces the value, not the point, is the contract.
"""

from __future__ import annotations

__all__ = [
    "BarycenterResult",
    "weighted_frechet_mean",
    "frechet_mean",
    "variance",
    "variance_with_certificate",
    "objective",
    "karcher_residual",
    "first_variation",
    "path_variances",
]

import logging
import math
from dataclasses import dataclass, field
from typing import Literal, NamedTuple, Sequence

import numpy as np

from w2geo.config import DEFAULT_TOLERANCES, FrechetSettings, Tolerances
from w2geo.errors import (
    ConvergenceError,
    CutLocusError,
    MalformedInputError,
    PreconditionError,
    SpaceMismatchError,
    W2GeoError,
)
from w2geo.geometry import (
    Point,
    Space,
    distance,
    exp,
    gluing_point,
    inner,
    is_gluing_point,
    log,
    log_many,
    pack,
    pairwise_distances,
    point_sort_key,
    tangent,
    unpack,
)
from w2geo.interpolate import MeasurePath, VectorField
from w2geo.measure import DiscreteMeasure

logger = logging.getLogger(__name__)

_DEFAULT_SETTINGS = FrechetSettings()
_BACKTRACK_LIMIT = 40
_EPS = np.finfo(float).eps


@dataclass
class BarycenterResult:
    """Minimizer of y ↦ Σ wᵢ d²(xᵢ, y) with its certificate."""

    point: Point
    value: float
    method: Literal["gradient", "grid"]
    iterations: int
    residual: float | None  # |Σ wᵢ log(point, xᵢ)|; None where log is undefined
    multiple: bool = False
    alternatives: list[Point] = field(default_factory=list)
    grid_minimum: float | None = None
    converged: bool = True  # False when the winning descent ran out of iterations


class _Descent(NamedTuple):
    point: Point
    value: float
    iterations: int
    residual: float | None
    converged: bool
    exhausted: bool = False  # stopped by settings.max_iter


# ---------------------------------------------------------------------------
# Objective and residual
# ---------------------------------------------------------------------------


def _normalized(weights: Sequence[float] | np.ndarray | None, n: int) -> np.ndarray:
    if weights is None:
        return np.full(n, 1.0 / n)
    w = np.asarray(weights, dtype=float).reshape(-1)
    if w.shape[0] != n:
        raise MalformedInputError(f"{n} points but {w.shape[0]} weights")
    if np.any(w <= 0):
        raise MalformedInputError(f"weights must be positive, got {w.tolist()!r}")
    return w / w.sum()


def _values(
    space: Space, candidates: np.ndarray, X: np.ndarray, w: np.ndarray, chunk: int = 4096
) -> np.ndarray:
    """Objective at every packed candidate row."""
    out = np.empty(candidates.shape[0])
    for start in range(0, candidates.shape[0], chunk):
        block = candidates[start : start + chunk]
        if space.kind == "sphere":
            # Gram-matrix chord lengths; accurate enough for ranking grid points.
            R = space.sphere_radius
            chord = np.sqrt(np.clip(2 * R**2 - 2 * (block @ X.T), 0.0, 4 * R**2))
            d = 2 * R * np.arcsin(np.clip(chord / (2 * R), 0.0, 1.0))
        else:
            d = pairwise_distances(block, X, space=space)
        out[start : start + chunk] = (d**2) @ w
    return out


def objective(point: Point, m: DiscreteMeasure) -> float:
    """Σ wᵢ d²(xᵢ, point)."""
    if point.space != m.space:
        raise SpaceMismatchError(f"point on {point.space}, measure on {m.space}")
    d = pairwise_distances(pack([point]), m.packed, space=m.space)[0]
    return float((d**2) @ m.weights)


def _tangent_norm(space: Space, g: np.ndarray) -> float:
    if space.kind == "hyperbolic":
        return math.sqrt(max(float(np.sum(g[1:] ** 2) - g[0] ** 2), 0.0))
    return float(np.linalg.norm(g))


def karcher_residual(
    point: Point,
    points: Sequence[Point],
    weights: Sequence[float] | np.ndarray | None = None,
    tol: Tolerances = DEFAULT_TOLERANCES,
) -> float | None:
    """|Σ wᵢ log(point, xᵢ)|, or None where the sum is undefined.

    The sum is undefined when an atom sits on the cut locus of ``point`` or
    ``point`` is the balloon's gluing point. On the string only the
    along-string components are summed.
    """
    points = list(points)
    w = _normalized(weights, len(points))
    space = point.space
    if space.kind == "balloon_string":
        if is_gluing_point(point):
            return None
        if point.tag == "string":
            ds = np.array([log(point, q, tie_break=True, tol=tol).components[0] for q in points])
            return abs(float(w @ ds))
    try:
        G = log_many(point, points, tie_break=False, tol=tol)
    except CutLocusError:
        return None
    return _tangent_norm(space, w @ G)


# ---------------------------------------------------------------------------
# Descent
# ---------------------------------------------------------------------------


def _descend(
    start: Point,
    points: list[Point],
    X: np.ndarray,
    w: np.ndarray,
    settings: FrechetSettings,
    tol: Tolerances,
) -> _Descent:
    """Karcher descent with backtracking from *start*.

    Off the NPC spaces the descent also stops once an accepted step moves
    less than ``tol.chart``. On the balloon an iterate that comes within
    ``settings.multiplicity_distance`` of the gluing point is snapped onto
    it when that does not raise the objective: the objective has a kink
    there and the gradient never vanishes.
    """
    space = start.space
    y = start
    value = float(_values(space, pack([y]), X, w)[0])
    residual: float | None = None
    glue = gluing_point(space) if space.kind == "balloon_string" else None
    glue_value = float(_values(space, pack([glue]), X, w)[0]) if glue is not None else math.inf
    for it in range(settings.max_iter):
        if glue is not None and (y.tag == "string" or is_gluing_point(y)):
            return _Descent(y, value, it, karcher_residual(y, points, w, tol), False)
        g = w @ log_many(y, points, tie_break=True, tol=tol)
        residual = _tangent_norm(space, g)
        if residual <= tol.residual:
            return _Descent(y, value, it, residual, True)

        step = settings.step
        accepted = False
        for _ in range(_BACKTRACK_LIMIT):
            try:
                trial = exp(tangent(y, step * g), tol=tol)
            except W2GeoError:
                step *= 0.5
                continue
            trial_value = float(_values(space, pack([trial]), X, w)[0])
            if trial_value <= value + 4 * _EPS * max(1.0, value):
                accepted = True
                break
            step *= 0.5
        if not accepted:
            logger.debug("Descent stalled after %d iterations, residual %.3g", it, residual)
            return _Descent(y, value, it, residual, False)
        moved = step * residual
        y, value = trial, trial_value
        if glue is not None and glue_value <= value and distance(y, glue) <= settings.multiplicity_distance:
            logger.debug("Descent snapped to the gluing point after %d iterations", it + 1)
            return _Descent(glue, glue_value, it + 1, None, False)
        if space.kind != "hyperbolic" and moved <= tol.chart:
            return _Descent(y, value, it + 1, karcher_residual(y, points, w, tol), False)
    return _Descent(y, value, settings.max_iter, residual, False, exhausted=True)


# ---------------------------------------------------------------------------
# Grid candidates for non-NPC spaces
# ---------------------------------------------------------------------------


def _sphere_rows(space: Space, resolution: int, random_starts: int, seed: int) -> np.ndarray:
    R = space.sphere_radius
    if space.dim == 1:
        phi = 2 * np.pi * np.arange(resolution) / resolution
        return R * np.column_stack([np.cos(phi), np.sin(phi)])
    if space.dim == 2:
        half = resolution // 2
        colat = np.pi * np.arange(1, half) / half
        lon = 2 * np.pi * np.arange(resolution) / resolution
        ct, lo = np.meshgrid(colat, lon, indexing="ij")
        body = R * np.column_stack(
            [
                (np.sin(ct) * np.cos(lo)).ravel(),
                (np.sin(ct) * np.sin(lo)).ravel(),
                np.cos(ct).ravel(),
            ]
        )
        poles = np.array([[0.0, 0.0, R], [0.0, 0.0, -R]])
        return np.vstack([poles, body])
    rng = np.random.default_rng(seed)
    raw = rng.normal(size=(random_starts, space.dim + 1))
    return R * raw / np.linalg.norm(raw, axis=1, keepdims=True)


def _string_optimum(space: Space, X: np.ndarray, w: np.ndarray) -> float:
    """Closed-form minimizer of the objective restricted to the string."""
    S = np.array([0.0, 0.0, -space.sphere_radius])
    sphere_to_s = pairwise_distances(X, np.concatenate([S, [0.0]])[None, :], space=space)[:, 0]
    sigma = np.where(X[:, 3] > 0, X[:, 3], -sphere_to_s)
    return float(np.clip(w @ sigma, 0.0, space.string_length))


def _candidates(
    space: Space, X: np.ndarray, w: np.ndarray, settings: FrechetSettings, seed: int
) -> tuple[np.ndarray, float, int]:
    """Packed candidate rows, their nominal spacing and the number of leading exact candidates."""
    res = settings.grid_resolution
    if space.kind == "sphere":
        rows = _sphere_rows(space, res, settings.random_starts, seed)
        return np.vstack([X, rows]), space.circumference / res, 0
    if space.kind == "flat_cylinder":
        c = space.circumference
        z_bar = float(w @ X[:, 0])
        theta = np.concatenate([c * np.arange(res) / res, X[:, 1]])
        return np.column_stack([np.full(theta.shape[0], z_bar), theta]), c / res, 0
    # balloon_string: sphere grid, atoms, gluing point, string optimum and end
    R = space.sphere_radius
    sphere_rows = _sphere_rows(Space.sphere(2, space.circumference), res, 0, seed)
    sphere_rows = np.column_stack([sphere_rows, np.zeros(sphere_rows.shape[0])])
    S = np.array([0.0, 0.0, -R])
    special = [np.concatenate([S, [0.0]])]
    for s in (_string_optimum(space, X, w), space.string_length):
        if s > 0:
            special.append(np.concatenate([S, [s]]))
    return np.vstack([np.array(special), X, sphere_rows]), space.circumference / res, len(special)


def _select_starts(space: Space, C: np.ndarray, values: np.ndarray, k: int, separation: float) -> list[int]:
    """Lowest-valued candidates that are pairwise farther apart than *separation*."""
    order = np.argsort(values, kind="stable")
    picked: list[int] = []
    for idx in order[: max(50 * k, k)]:
        if picked:
            d = pairwise_distances(C[idx][None, :], C[picked], space=space)[0]
            if np.min(d) <= separation:
                continue
        picked.append(int(idx))
        if len(picked) == k:
            break
    return picked


def _grid_mean(
    points: list[Point],
    X: np.ndarray,
    w: np.ndarray,
    settings: FrechetSettings,
    tol: Tolerances,
    seed: int,
) -> BarycenterResult:
    space = points[0].space
    C, spacing, n_exact = _candidates(space, X, w, settings, seed)
    values = _values(space, C, X, w)
    grid_min = float(values.min())

    starts = _select_starts(space, C, values, settings.refine_starts, 2 * spacing)
    starts = sorted(set(starts) | set(range(n_exact)))

    finals: list[_Descent] = []
    iterations = 0
    for idx in starts:
        start = unpack(space, C[idx][None, :])[0]
        outcome = _descend(start, points, X, w, settings, tol)
        iterations += outcome.iterations
        finals.append(outcome)

    best = min(finals, key=lambda f: (f.value, point_sort_key(f.point)))
    if best.exhausted:
        logger.warning(
            "Fréchet mean on %s: refinement exhausted %d iterations at value %.12g",
            space, settings.max_iter, best.value,
        )
    alternatives: list[Point] = []
    for f in finals:
        if f.value - best.value > settings.multiplicity_value:
            continue
        if distance(f.point, best.point) <= settings.multiplicity_distance:
            continue
        if all(distance(f.point, a) > settings.multiplicity_distance for a in alternatives):
            alternatives.append(f.point)
    if alternatives:
        logger.info(
            "Fréchet mean on %s is not unique: %d further minimizer(s) within %.1g of %.12g",
            space, len(alternatives), settings.multiplicity_value, best.value,
        )
    return BarycenterResult(
        point=best.point,
        value=best.value,
        method="grid",
        iterations=iterations,
        residual=karcher_residual(best.point, points, w, tol),
        multiple=bool(alternatives),
        alternatives=alternatives,
        grid_minimum=grid_min,
        converged=not best.exhausted,
    )


# ---------------------------------------------------------------------------
# Public API
# ---------------------------------------------------------------------------


def weighted_frechet_mean(
    points: Sequence[Point],
    weights: Sequence[float] | np.ndarray | None = None,
    settings: FrechetSettings = _DEFAULT_SETTINGS,
    tol: Tolerances = DEFAULT_TOLERANCES,
    seed: int = 0,
) -> BarycenterResult:
    """Minimize y ↦ Σ wᵢ d²(xᵢ, y) over the space of *points*.

    Parameters
    ----------
    points:
        Points of one Space.
    weights:
        Positive weights, normalized internally; uniform when omitted.
    seed:
        Only used for the random starts on spheres of dimension ≥ 3.

    Raises
    ------
    ConvergenceError
        If hyperbolic descent exhausts ``settings.max_iter`` above the
        residual tolerance.
    """
    points = list(points)
    if not points:
        raise MalformedInputError("Fréchet mean of an empty point set")
    space = points[0].space
    w = _normalized(weights, len(points))
    X = pack(points)

    if len(points) == 1:
        return BarycenterResult(points[0], 0.0, "gradient", 0, 0.0)

    if space.kind == "euclidean":
        mean = w @ X
        diff = X - mean
        value = float(w @ np.sum(diff**2, axis=1))
        return BarycenterResult(
            Point(space, mean), value, "gradient", 0, float(np.linalg.norm(w @ diff))
        )

    if space.kind == "hyperbolic":
        costs = (pairwise_distances(X, X, space=space) ** 2) @ w
        start = points[int(np.argmin(costs))]
        outcome = _descend(start, points, X, w, settings, tol)
        if not outcome.converged:
            if outcome.exhausted:
                raise ConvergenceError(
                    f"Karcher descent did not converge in {settings.max_iter} iterations "
                    f"(residual {outcome.residual:.3g})",
                    iterations=outcome.iterations,
                    residual=outcome.residual,
                )
            logger.warning(
                "Karcher descent stalled at residual %.3g above %.1g", outcome.residual, tol.residual
            )
        return BarycenterResult(
            outcome.point,
            outcome.value,
            "gradient",
            outcome.iterations,
            outcome.residual,
            converged=outcome.converged,
        )

    return _grid_mean(points, X, w, settings, tol, seed)


def frechet_mean(
    m: DiscreteMeasure,
    settings: FrechetSettings = _DEFAULT_SETTINGS,
    tol: Tolerances = DEFAULT_TOLERANCES,
) -> BarycenterResult:
    """Fréchet mean (barycenter) of a measure."""
    return weighted_frechet_mean(m.atoms, m.weights, settings, tol)


def variance_with_certificate(
    m: DiscreteMeasure,
    settings: FrechetSettings = _DEFAULT_SETTINGS,
    tol: Tolerances = DEFAULT_TOLERANCES,
) -> tuple[float, BarycenterResult]:
    result = frechet_mean(m, settings, tol)
    return result.value, result


def variance(
    m: DiscreteMeasure,
    settings: FrechetSettings = _DEFAULT_SETTINGS,
    tol: Tolerances = DEFAULT_TOLERANCES,
) -> float:
    """var(m) = min_y Σ wᵢ d²(xᵢ, y)."""
    return frechet_mean(m, settings, tol).value


def path_variances(
    path: MeasurePath,
    settings: FrechetSettings = _DEFAULT_SETTINGS,
    tol: Tolerances = DEFAULT_TOLERANCES,
) -> np.ndarray:
    return np.array([variance(m, settings, tol) for m in path.measures])


def first_variation(
    m: DiscreteMeasure,
    V: VectorField,
    gamma0: Point,
    tol: Tolerances = DEFAULT_TOLERANCES,
) -> float:
    """d/dt|₀ of W₂²(δ_γ(t), μₜ) along the quasi-geodesic of *V*.

    Returns −2 Σ wᵢ ⟨log(xᵢ, γ₀), V(xᵢ)⟩.

    Raises
    ------
    PreconditionError
        If *gamma0* is not a Fréchet mean of *m* (residual above
        ``tol.first_variation_residual``) or an atom sits on its cut locus.
    """
    if len(V) != len(m):
        raise PreconditionError("vector field does not match the measure's atoms")
    residual = karcher_residual(gamma0, m.atoms, m.weights, tol)
    if residual is None or residual > tol.first_variation_residual:
        raise PreconditionError(
            f"gamma0 is not a Fréchet mean of the measure (residual {residual!r})"
        )
    total = 0.0
    for w, atom, v in zip(m.weights, m.atoms, V.vectors):
        try:
            to_mean = log(atom, gamma0, tol=tol)
        except CutLocusError as exc:
            raise PreconditionError("an atom lies on the cut locus of gamma0") from exc
        total += float(w) * inner(to_mean, v)
    return -2.0 * total
