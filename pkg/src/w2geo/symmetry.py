from __future__ import annotations

__all__ = [
    "IsometryGroup",
    "SandwichReport",
    "generate_group",
    "trivial_group",
    "cyclic_rotation_group",
    "reflection_group",
    "antipodal_group",
    "orbit_ensemble",
    "is_invariant",
    "w2_projection",
    "l2_projection",
    "sandwich_report",
]

import logging
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from w2geo.config import DEFAULT_TOLERANCES, Tolerances, W2Config
from w2geo.errors import IsometryError, SpaceMismatchError
from w2geo.frechet import variance, weighted_frechet_mean
from w2geo.geometry import (
    Isometry,
    Point,
    Space,
    apply_isometry,
    compose,
    cylinder_isometry,
    identity,
    inverse,
    isometries_close,
    map_points,
    point_reflection,
    reflection,
    rotation,
)
from w2geo.measure import (
    DiscreteMeasure,
    MeasureEnsemble,
    make_ensemble,
    measures_close,
    mixture,
    pushforward,
)
from w2geo.transport import solve_ot
from w2geo.wbarycenter import EnsembleBarycenterResult, assess_candidate, w2_barycenter

logger = logging.getLogger(__name__)

DEFAULT_MAX_ORDER = 1024


@dataclass(frozen=True, eq=False)
class IsometryGroup:
    """A finite isometry group with its uniform Haar weights.

    ``elements[0]`` is the identity.
    """

    space: Space
    elements: tuple[Isometry, ...]

    def __post_init__(self) -> None:
        elements = tuple(self.elements)
        if not elements:
            raise IsometryError("a group needs at least the identity")
        for g in elements:
            if g.space != self.space:
                raise SpaceMismatchError(f"group element of {g.space} in a group on {self.space}")
        if not isometries_close(elements[0], identity(self.space)):
            raise IsometryError("the first group element must be the identity")
        object.__setattr__(self, "elements", elements)

    def __len__(self) -> int:
        return len(self.elements)

    @property
    def haar(self) -> np.ndarray:
        return np.full(len(self), 1.0 / len(self))

    def index_of(self, g: Isometry, tol: float = 1e-9) -> int | None:
        for idx, h in enumerate(self.elements):
            if isometries_close(g, h, tol):
                return idx
        return None

    def is_closed(self, tol: float = 1e-9) -> bool:
        """True when products and inverses of elements stay in the group."""
        for g in self.elements:
            if self.index_of(inverse(g), tol) is None:
                return False
            for h in self.elements:
                if self.index_of(compose(g, h), tol) is None:
                    return False
        return True


@dataclass
class SandwichReport:
    """var(P^W(μ)) ≤ var(μ) ≤ var(P^L²(μ)) with the checks that apply."""

    var_w: float
    var_mu: float
    var_l2: float
    left_holds: bool | None  # only asserted on NPC spaces
    right_holds: bool
    invariant: bool
    warnings: list[str] = field(default_factory=list)


# ---------------------------------------------------------------------------
# Group construction
# ---------------------------------------------------------------------------


def generate_group(
    generators: Sequence[Isometry],
    space: Space | None = None,
    max_order: int = DEFAULT_MAX_ORDER,
    tol: float = 1e-9,
) -> IsometryGroup:
    """Close *generators* under composition.

    Raises
    ------
    IsometryError
        If the closure exceeds *max_order* elements (the generated group is
        infinite or larger than allowed).
    """
    if space is None:
        if not generators:
            raise IsometryError("need a space or at least one generator")
        space = generators[0].space
    elements = [identity(space)]
    frontier = list(elements)
    while frontier:
        fresh = []
        for g in frontier:
            for gen in generators:
                h = compose(gen, g)
                if any(isometries_close(h, e, tol) for e in elements):
                    continue
                elements.append(h)
                fresh.append(h)
                if len(elements) > max_order:
                    raise IsometryError(
                        f"group closure exceeds {max_order} elements; generators may not "
                        "generate a finite group"
                    )
        frontier = fresh
    logger.debug("Generated group of order %d on %s", len(elements), space)
    return IsometryGroup(space, tuple(elements))


def trivial_group(space: Space) -> IsometryGroup:
    return IsometryGroup(space, (identity(space),))


def cyclic_rotation_group(space: Space, k: int) -> IsometryGroup:
    """Z_k of rotations by 2π/k (angular shifts by c/k on the cylinder)."""
    if k < 1:
        raise IsometryError(f"group order must be positive, got {k!r}")
    if k == 1:
        return trivial_group(space)
    if space.kind == "flat_cylinder":
        gen = cylinder_isometry(space, angular_shift=space.circumference / k)
    else:
        gen = rotation(space, 2 * math.pi / k)
    return generate_group([gen], space, max_order=k)


def reflection_group(space: Space, axis: int = 0) -> IsometryGroup:
    return generate_group([reflection(space, axis)], space, max_order=2)


def antipodal_group(space: Space) -> IsometryGroup:
    """{id, x ↦ −x}."""
    return generate_group([point_reflection(space)], space, max_order=2)


# ---------------------------------------------------------------------------
# Orbits and projections
# ---------------------------------------------------------------------------


def orbit_ensemble(G: IsometryGroup, m: DiscreteMeasure) -> MeasureEnsemble:
    """Σ_g (1/|G|) δ_{g_# m}."""
    if G.space != m.space:
        raise SpaceMismatchError(f"group on {G.space}, measure on {m.space}")
    return make_ensemble([pushforward(g, m) for g in G.elements], G.haar)


def is_invariant(G: IsometryGroup, m: DiscreteMeasure, tol: float = 1e-9) -> list[int]:
    """Indices of the group elements that do not fix *m* (empty when invariant)."""
    return [
        idx
        for idx, g in enumerate(G.elements)
        if not measures_close(pushforward(g, m), m, tol=tol, weight_tol=tol)
    ]


def l2_projection(
    G: IsometryGroup, m: DiscreteMeasure, tol: Tolerances = DEFAULT_TOLERANCES
) -> DiscreteMeasure:
    """Group average Σ_g (1/|G|) g_# m."""
    return mixture(orbit_ensemble(G, m), tol=tol)


def _orbit_candidate(G: IsometryGroup, rho: DiscreteMeasure) -> DiscreteMeasure:
    """Σ_g (1/|G|) g_# rho without merging; atom g·y_j sits at index g·len(rho) + j."""
    atoms = [p for g in G.elements for p in map_points(g, rho.atoms)]
    weights = np.tile(rho.weights, len(G)) / len(G)
    return DiscreteMeasure(rho.space, tuple(atoms), weights)


def _invariant_barycenter(
    G: IsometryGroup, m: DiscreteMeasure, ens: MeasureEnsemble, config: W2Config
) -> EnsembleBarycenterResult:
    """Fixed-point iteration restricted to orbit measures Σ_g (1/|G|) g_# rho.

    For an invariant candidate ν the orbit objective equals W₂²(m, ν), so each
    round couples ν to *m* alone and moves every atom y_j of rho to the Fréchet
    mean of the points g⁻¹x coupled to g·y_j.
    """
    settings = config.barycenter
    inverses = [inverse(g) for g in G.elements]
    rho = m
    current = math.inf
    iterations = 0
    stop_reason = "max_iter"
    for iterations in range(1, settings.max_iter + 1):
        coupling = solve_ot(_orbit_candidate(G, rho), m, config.transport, config.tolerances)
        if current - coupling.cost < settings.tol:
            stop_reason = "objective decrease below tolerance"
            break
        current = coupling.cost
        targets: list[list[Point]] = [[] for _ in rho.atoms]
        masses: list[list[float]] = [[] for _ in rho.atoms]
        for idx, col, mass in coupling.entries:
            gi, j = divmod(idx, len(rho))
            targets[j].append(apply_isometry(inverses[gi], m.atoms[col]))
            masses[j].append(mass)
        atoms = tuple(
            weighted_frechet_mean(pts, w, config.frechet, config.tolerances).point
            for pts, w in zip(targets, masses)
        )
        rho = DiscreteMeasure(rho.space, atoms, rho.weights)
    result = assess_candidate(ens, _orbit_candidate(G, rho), config)
    result.iterations = iterations
    result.converged = stop_reason != "max_iter"
    result.stop_reason = f"orbit iteration: {stop_reason}"
    return result


def w2_projection(
    G: IsometryGroup, m: DiscreteMeasure, config: W2Config | None = None
) -> EnsembleBarycenterResult:
    """Wasserstein barycenter of the orbit of *m*.

    Two starts are tried: *m* itself and its group average (which is
    invariant and has one atom per orbit point). Invariant results are
    preferred, then the lower objective. When neither start ends invariant,
    the iteration restricted to orbit measures supplies an invariant
    candidate; should even that fail the result carries warnings naming the
    violating elements.
    """
    config = config or W2Config()
    ens = orbit_ensemble(G, m)
    inits = [m] if len(G) == 1 else [m, l2_projection(G, m, config.tolerances)]

    scored = []
    for init in inits:
        result = w2_barycenter(ens, init, config)
        violating = is_invariant(G, result.measure, tol=config.tolerances.merge)
        scored.append((bool(violating), result.objective, result, violating))
    if all(item[0] for item in scored):
        logger.debug("Free iteration broke the symmetry; restricting to orbit measures")
        result = _invariant_barycenter(G, m, ens, config)
        violating = is_invariant(G, result.measure, tol=config.tolerances.merge)
        scored.append((bool(violating), result.objective, result, violating))
    _, _, best, violating = min(scored, key=lambda item: (item[0], item[1]))

    if violating:
        msg = f"W2 projection is not invariant under group element(s) {violating}"
        best.warnings.append(msg)
        logger.warning(msg)
    return best


def sandwich_report(
    G: IsometryGroup, m: DiscreteMeasure, config: W2Config | None = None
) -> SandwichReport:
    """Compute var(P^W(m)), var(m), var(P^L²(m)) and check their order.

    The left inequality is asserted on NPC spaces only; the right one
    everywhere.
    """
    config = config or W2Config()
    tol = config.tolerances
    projection = w2_projection(G, m, config)
    var_w = variance(projection.measure, config.frechet, tol)
    var_mu = variance(m, config.frechet, tol)
    var_l2 = variance(l2_projection(G, m, tol), config.frechet, tol)
    return SandwichReport(
        var_w=var_w,
        var_mu=var_mu,
        var_l2=var_l2,
        left_holds=(var_w <= var_mu + tol.inequality) if m.space.is_npc else None,
        right_holds=var_mu <= var_l2 + tol.inequality,
        invariant=not projection.warnings,
        warnings=list(projection.warnings),
    )
