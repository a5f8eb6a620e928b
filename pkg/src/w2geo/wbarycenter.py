from __future__ import annotations

__all__ = [
    "EnsembleBarycenterResult",
    "JensenReport",
    "barycenter_objective",
    "w2_barycenter",
    "best_barycenter",
    "assess_candidate",
    "zero_sum_residual",
    "jensen_gap",
    "history_frame",
]

import logging
import math
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from w2geo.config import W2Config
from w2geo.errors import SpaceMismatchError
from w2geo.frechet import karcher_residual, variance, weighted_frechet_mean
from w2geo.geometry import Point
from w2geo.measure import DiscreteMeasure, MeasureEnsemble, canonicalize, mixture
from w2geo.transport import Coupling, solve_ot

logger = logging.getLogger(__name__)


# ---------------------------------------------------------------------------
# Data models
# ---------------------------------------------------------------------------


@dataclass
class EnsembleBarycenterResult:
    """Outcome of the free-support barycenter iteration.

    ``candidate`` keeps the iterated support as is (one atom per init atom,
    possibly coinciding); ``measure`` is its canonical form.
    """

    measure: DiscreteMeasure
    candidate: DiscreteMeasure
    objective: float
    iterations: int
    history: list[float] = field(default_factory=list)
    residual: float = math.nan  # zero-sum residual of the final candidate
    converged: bool = False
    stop_reason: str = ""
    warnings: list[str] = field(default_factory=list)


@dataclass
class JensenReport:
    """Variance of the barycenter against the mean and linear variances."""

    var_bar: float
    mean_var: float  # Σ λᵢ var(μᵢ)
    linear_var: float  # var of the mixture Σ λᵢ μᵢ
    gap_bar: float  # mean_var - var_bar
    gap_linear: float  # linear_var - mean_var
    npc: bool
    residual: float
    jensen_holds: bool | None  # var_bar <= mean_var; None when not asserted
    comparison_holds: bool | None  # var_bar <= linear_var; None when not asserted
    linear_holds: bool  # linear_var >= mean_var, curvature free


# ---------------------------------------------------------------------------
# Objective
# ---------------------------------------------------------------------------


def _couplings(nu: DiscreteMeasure, ens: MeasureEnsemble, config: W2Config) -> list[Coupling]:
    if nu.space != ens.space:
        raise SpaceMismatchError(f"candidate on {nu.space}, ensemble on {ens.space}")
    return [solve_ot(nu, mu, config.transport, config.tolerances) for mu in ens.measures]


def _objective(ens: MeasureEnsemble, couplings: list[Coupling]) -> float:
    return float(sum(lam * c.cost for lam, c in zip(ens.weights, couplings)))


def barycenter_objective(
    ens: MeasureEnsemble, nu: DiscreteMeasure, config: W2Config | None = None
) -> float:
    """Σᵢ λᵢ W₂²(μᵢ, ν) by exact OT."""
    config = config or W2Config()
    return _objective(ens, _couplings(nu, ens, config))


# ---------------------------------------------------------------------------
# Fixed-point iteration
# ---------------------------------------------------------------------------


def _targets(
    k: int, ens: MeasureEnsemble, couplings: list[Coupling]
) -> tuple[list[Point], list[float]]:
    """Atoms coupled to candidate atom *k*, weighted by λᵢ·mass."""
    points: list[Point] = []
    weights: list[float] = []
    for lam, c in zip(ens.weights, couplings):
        for i, j, mass in c.entries:
            if i == k:
                points.append(c.target.atoms[j])
                weights.append(float(lam) * mass)
    return points, weights


def _update(candidate: DiscreteMeasure, ens: MeasureEnsemble, couplings: list[Coupling], config: W2Config) -> DiscreteMeasure:
    atoms = []
    for k in range(len(candidate)):
        points, weights = _targets(k, ens, couplings)
        mean = weighted_frechet_mean(points, weights, config.frechet, config.tolerances)
        atoms.append(mean.point)
    return DiscreteMeasure(candidate.space, tuple(atoms), candidate.weights)


def w2_barycenter(
    ens: MeasureEnsemble,
    init: DiscreteMeasure | None = None,
    config: W2Config | None = None,
) -> EnsembleBarycenterResult:
    """Free-support Wasserstein barycenter by fixed-point iteration.

    Each round solves OT from the candidate to every μᵢ and moves each
    candidate atom to the Fréchet mean of the atoms it is coupled to
    (weights λᵢ·mass). Candidate weights stay those of *init*. Iteration
    stops when the objective decreases by less than ``config.barycenter.tol``,
    when it would increase (the step is then discarded), or after
    ``config.barycenter.max_iter`` rounds.

    Parameters
    ----------
    init:
        Starting candidate; defaults to the entry with the largest weight
        (first on ties).
    """
    config = config or W2Config()
    if init is None:
        init = ens.measures[int(np.argmax(ens.weights))]
    if init.space != ens.space:
        raise SpaceMismatchError(f"init on {init.space}, ensemble on {ens.space}")
    settings = config.barycenter

    candidate = init
    couplings = _couplings(candidate, ens, config)
    current = _objective(ens, couplings)
    history = [current]
    converged = False
    stop_reason = "max_iter"
    iterations = 0

    for iterations in range(1, settings.max_iter + 1):
        proposal = _update(candidate, ens, couplings, config)
        new_couplings = _couplings(proposal, ens, config)
        new_value = _objective(ens, new_couplings)
        decrease = current - new_value
        logger.debug("Barycenter iteration %d: objective %.12g", iterations, new_value)
        if decrease < 0:
            converged = True
            stop_reason = "objective increased; step discarded"
            break
        candidate, couplings, current = proposal, new_couplings, new_value
        history.append(current)
        if decrease < settings.tol:
            converged = True
            stop_reason = "objective decrease below tolerance"
            break

    result = EnsembleBarycenterResult(
        measure=canonicalize(candidate, tol=config.tolerances, max_atoms=max(len(candidate), 10_000)),
        candidate=candidate,
        objective=current,
        iterations=iterations,
        history=history,
        converged=converged,
        stop_reason=stop_reason,
    )
    result.residual = zero_sum_residual(result, ens, config)
    logger.info(
        "Barycenter on %s: objective %.12g after %d iteration(s) (%s), residual %.3g",
        ens.space, current, iterations, stop_reason, result.residual,
    )
    return result


def best_barycenter(ens: MeasureEnsemble, config: W2Config | None = None) -> EnsembleBarycenterResult:
    """Multistart: every μᵢ as init, lowest objective wins (first on ties)."""
    config = config or W2Config()
    best: EnsembleBarycenterResult | None = None
    for mu in ens.measures:
        result = w2_barycenter(ens, mu, config)
        if best is None or result.objective < best.objective:
            best = result
    assert best is not None
    return best


def assess_candidate(
    ens: MeasureEnsemble, nu: DiscreteMeasure, config: W2Config | None = None
) -> EnsembleBarycenterResult:
    """Wrap an arbitrary candidate as a zero-iteration result."""
    config = config or W2Config()
    value = barycenter_objective(ens, nu, config)
    result = EnsembleBarycenterResult(
        measure=canonicalize(nu, tol=config.tolerances, max_atoms=max(len(nu), 10_000)),
        candidate=nu,
        objective=value,
        iterations=0,
        history=[value],
        stop_reason="assessed",
    )
    result.residual = zero_sum_residual(result, ens, config)
    return result


def zero_sum_residual(
    result: EnsembleBarycenterResult, ens: MeasureEnsemble, config: W2Config | None = None
) -> float:
    """max over candidate atoms x of |Σᵢ λᵢ · mean of log(x, coupled targets in μᵢ)|.

    Couplings are solved afresh from ``result.candidate``. Atoms where the
    logarithm sum is undefined (cut locus, gluing point) are skipped; the
    result is NaN when no atom qualifies.
    """
    config = config or W2Config()
    couplings = _couplings(result.candidate, ens, config)
    worst = -math.inf
    for k, atom in enumerate(result.candidate.atoms):
        points, weights = _targets(k, ens, couplings)
        r = karcher_residual(atom, points, weights, config.tolerances)
        if r is not None:
            worst = max(worst, r)
    return worst if worst > -math.inf else math.nan


# ---------------------------------------------------------------------------
# Reports
# ---------------------------------------------------------------------------


def jensen_gap(
    ens: MeasureEnsemble, result: EnsembleBarycenterResult, config: W2Config | None = None
) -> JensenReport:
    """Compare var(μ̄) with Σ λᵢ var(μᵢ) and with var(Σ λᵢ μᵢ).

    The barycenter inequalities are only asserted on NPC spaces and only when
    the barycenter residual is at most ``tolerances.barycenter_residual``;
    the linear inequality is asserted everywhere.
    """
    config = config or W2Config()
    tol = config.tolerances
    var_bar = variance(result.measure, config.frechet, tol)
    mean_var = float(sum(lam * variance(mu, config.frechet, tol) for lam, mu in ens.entries))
    linear_var = variance(mixture(ens, tol), config.frechet, tol)

    asserted = ens.space.is_npc and result.residual <= tol.barycenter_residual
    return JensenReport(
        var_bar=var_bar,
        mean_var=mean_var,
        linear_var=linear_var,
        gap_bar=mean_var - var_bar,
        gap_linear=linear_var - mean_var,
        npc=ens.space.is_npc,
        residual=result.residual,
        jensen_holds=(var_bar <= mean_var + tol.inequality) if asserted else None,
        comparison_holds=(var_bar <= linear_var + tol.inequality) if asserted else None,
        linear_holds=linear_var >= mean_var - tol.inequality,
    )


def history_frame(result: EnsembleBarycenterResult) -> pd.DataFrame:
    """Objective history as a two-column table (iteration, objective)."""
    return pd.DataFrame(
        {"iteration": np.arange(len(result.history)), "objective": result.history}
    )
