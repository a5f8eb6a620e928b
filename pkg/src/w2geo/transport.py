from __future__ import annotations

__all__ = ["Coupling", "solve_ot", "w2_distance", "w2_squared", "coupling_cost", "coupling_frame"]

import logging
from dataclasses import dataclass

import numpy as np
import ot
import pandas as pd
from scipy.optimize import linear_sum_assignment

from w2geo.config import DEFAULT_TOLERANCES, Tolerances, TransportSettings
from w2geo.errors import ConvergenceError, MalformedInputError, SpaceMismatchError
from w2geo.geometry import distance, pairwise_distances
from w2geo.measure import DiscreteMeasure

logger = logging.getLogger(__name__)

_DEFAULT_SETTINGS = TransportSettings()


@dataclass(frozen=True, eq=False)
class Coupling:
    """Sparse optimal transport plan between two measures.

    Entry ``k`` moves ``mass[k]`` from ``source.atoms[rows[k]]`` to
    ``target.atoms[cols[k]]``; ``cost`` is Σ mass·d².
    """

    source: DiscreteMeasure
    target: DiscreteMeasure
    rows: np.ndarray
    cols: np.ndarray
    mass: np.ndarray
    cost: float

    def __post_init__(self) -> None:
        for name, dtype in (("rows", int), ("cols", int), ("mass", float)):
            arr = np.array(getattr(self, name), dtype=dtype).reshape(-1)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if not (self.rows.shape == self.cols.shape == self.mass.shape):
            raise MalformedInputError("coupling rows, cols and mass must have equal length")
        if np.any(self.mass <= 0):
            raise MalformedInputError("coupling entries must carry positive mass")

    @property
    def entries(self) -> list[tuple[int, int, float]]:
        return list(zip(self.rows.tolist(), self.cols.tolist(), self.mass.tolist()))

    @property
    def is_assignment(self) -> bool:
        """True when every source atom is sent to exactly one target atom."""
        return bool(np.bincount(self.rows, minlength=len(self.source)).max() == 1)

    def dense(self) -> np.ndarray:
        plan = np.zeros((len(self.source), len(self.target)))
        np.add.at(plan, (self.rows, self.cols), self.mass)
        return plan


def _check_marginals(c: Coupling, tol: Tolerances) -> None:
    row_sums = np.bincount(c.rows, weights=c.mass, minlength=len(c.source))
    col_sums = np.bincount(c.cols, weights=c.mass, minlength=len(c.target))
    row_err = float(np.max(np.abs(row_sums - c.source.weights)))
    col_err = float(np.max(np.abs(col_sums - c.target.weights)))
    if max(row_err, col_err) > tol.marginal:
        raise MalformedInputError(
            f"transport plan violates its marginals (row error {row_err:.3g}, column error {col_err:.3g})"
        )


def _is_uniform(weights: np.ndarray) -> bool:
    n = weights.shape[0]
    return bool(np.max(np.abs(weights - 1.0 / n)) <= 1e-15)


def solve_ot(
    mu: DiscreteMeasure,
    nu: DiscreteMeasure,
    settings: TransportSettings = _DEFAULT_SETTINGS,
    tol: Tolerances = DEFAULT_TOLERANCES,
) -> Coupling:
    """Exact optimal coupling for the squared-distance cost.

    Equal-count uniform measures are solved as an assignment problem
    (Hungarian algorithm); everything else goes through the network simplex
    solver. Both are deterministic for fixed inputs.

    Raises
    ------
    SpaceMismatchError
        If the measures live on different spaces.
    MalformedInputError
        If a measure exceeds ``settings.max_atoms`` or the plan breaks its marginals.
    ConvergenceError
        If the network simplex hits ``settings.num_iter_max``.
    """
    if mu.space != nu.space:
        raise SpaceMismatchError(f"cannot transport {mu.space} to {nu.space}")
    for label, m in (("source", mu), ("target", nu)):
        if len(m) > settings.max_atoms:
            raise MalformedInputError(
                f"{label} has {len(m)} atoms, above the limit of {settings.max_atoms}"
            )

    cost_matrix = pairwise_distances(mu.packed, nu.packed, space=mu.space) ** 2

    if (
        settings.assignment_fast_path
        and len(mu) == len(nu)
        and _is_uniform(mu.weights)
        and _is_uniform(nu.weights)
    ):
        rows, cols = linear_sum_assignment(cost_matrix)
        mass = mu.weights[rows]
        method = "assignment"
    else:
        plan, log = ot.emd(
            np.ascontiguousarray(mu.weights),
            np.ascontiguousarray(nu.weights),
            np.ascontiguousarray(cost_matrix),
            numItermax=settings.num_iter_max,
            log=True,
        )
        if log.get("warning"):
            raise ConvergenceError(
                f"network simplex did not reach optimality: {log['warning']}",
                iterations=settings.num_iter_max,
            )
        rows, cols = np.nonzero(plan > 0)
        mass = plan[rows, cols]
        method = "network-simplex"

    cost = float(np.sum(mass * cost_matrix[rows, cols]))
    coupling = Coupling(mu, nu, rows, cols, mass, cost)
    _check_marginals(coupling, tol)
    logger.debug(
        "Solved OT %dx%d via %s: %d entries, cost %.12g",
        len(mu), len(nu), method, len(rows), cost,
    )
    return coupling


def w2_squared(
    mu: DiscreteMeasure, nu: DiscreteMeasure, settings: TransportSettings = _DEFAULT_SETTINGS
) -> float:
    return solve_ot(mu, nu, settings).cost


def w2_distance(
    mu: DiscreteMeasure, nu: DiscreteMeasure, settings: TransportSettings = _DEFAULT_SETTINGS
) -> float:
    """W₂(μ, ν), the square root of the optimal cost."""
    return float(np.sqrt(max(w2_squared(mu, nu, settings), 0.0)))


def coupling_cost(c: Coupling) -> float:
    """Σ mass·d² recomputed point by point, independent of the stored cost."""
    return float(
        sum(
            m * distance(c.source.atoms[i], c.target.atoms[j]) ** 2
            for i, j, m in c.entries
        )
    )


def coupling_frame(c: Coupling) -> pd.DataFrame:
    """Coupling entries as a table (source/target index, mass, squared distance)."""
    sq = [distance(c.source.atoms[i], c.target.atoms[j]) ** 2 for i, j, _ in c.entries]
    return pd.DataFrame(
        {
            "source": c.rows,
            "target": c.cols,
            "mass": c.mass,
            "sq_distance": sq,
        }
    )
