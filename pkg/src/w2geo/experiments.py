"""w2geo.experiments — seeded experiment runners.

Every runner returns an :class:`ExperimentReport`: the computed quantities,
the expected values with their provenance and one pass/fail entry per
assertion. Reports are reproducible from (name, parameters, seed); all
randomness flows from one ``numpy.random.SeedSequence`` per runner, spawned
per trial so trial ``i`` does not depend on how many trials ran before it.

Provenance tags
---------------
``closed-form``  value derived by hand from the construction
``oracle``       independent computation (brute force, LP, finite differences)
``property``     inequality or invariant that must hold
``expected``     qualitative behavior the construction is built to show
``trivial``      degenerate case
"""

from __future__ import annotations

__all__ = [
    "Assertion",
    "ExperimentReport",
    "EXPERIMENTS",
    "random_point",
    "random_measure",
    "random_ensemble",
    "random_field",
    "run_sphere_example",
    "run_balloon_example",
    "run_cylinder_counterexample",
    "run_positive_curvature_counterexample",
    "run_convexity_suite",
    "run_projection_suite",
    "run_jensen_suite",
    "run_oracle_suite",
    "run_verify",
    "resolve_space",
]

import itertools
import logging
import math
import time
from dataclasses import dataclass, field
from typing import Any, Callable

import numpy as np
from scipy.optimize import linprog

from w2geo.config import TransportSettings, W2Config
from w2geo.errors import PreconditionError
from w2geo.frechet import first_variation, frechet_mean, objective, path_variances, variance
from w2geo.geometry import (
    Point,
    Space,
    distance,
    exp,
    geodesic_point,
    hyperbolic_point,
    log_many,
    make_point,
    norm,
    north_pole,
    pairwise_distances,
    scale,
    south_pole,
    spherical_point,
    string_point,
    tangent,
)
from w2geo.interpolate import (
    VectorField,
    convexity_certificate,
    default_grid,
    displacement_interpolant,
    displacement_path,
    linear_path,
    quasi_geodesic,
)
from w2geo.measure import (
    DiscreteMeasure,
    MeasureEnsemble,
    dirac,
    make_ensemble,
    make_measure,
    measures_close,
    mixture,
    uniform,
)
from w2geo.symmetry import (
    cyclic_rotation_group,
    l2_projection,
    reflection_group,
    sandwich_report,
    trivial_group,
    w2_projection,
)
from w2geo.transport import solve_ot
from w2geo.wbarycenter import barycenter_objective, best_barycenter, jensen_gap

logger = logging.getLogger(__name__)


# ---------------------------------------------------------------------------
# Data models
# ---------------------------------------------------------------------------


@dataclass
class Assertion:
    """One checked quantity of an experiment."""

    name: str
    computed: float
    expected: float | None
    tolerance: float
    provenance: str
    passed: bool
    relation: str = "=="  # ==, <=, >=, <, >, or "holds"


@dataclass
class ExperimentReport:
    """Outcome of one experiment run."""

    name: str
    space: str
    parameters: dict[str, Any] = field(default_factory=dict)
    inputs: dict[str, Any] = field(default_factory=dict)
    quantities: dict[str, Any] = field(default_factory=dict)
    assertions: list[Assertion] = field(default_factory=list)
    runtime: float = 0.0
    notes: list[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(a.passed for a in self.assertions)

    @property
    def failures(self) -> list[Assertion]:
        return [a for a in self.assertions if not a.passed]

    def expect_close(
        self, name: str, computed: float, expected: float, tolerance: float, provenance: str
    ) -> bool:
        ok = bool(abs(computed - expected) <= tolerance)
        self.assertions.append(
            Assertion(name, float(computed), float(expected), tolerance, provenance, ok, "==")
        )
        return ok

    def expect_le(
        self, name: str, lhs: float, rhs: float, tolerance: float, provenance: str
    ) -> bool:
        ok = bool(lhs <= rhs + tolerance)
        self.assertions.append(Assertion(name, float(lhs), float(rhs), tolerance, provenance, ok, "<="))
        return ok

    def expect_gt(
        self, name: str, lhs: float, rhs: float, provenance: str, margin: float = 0.0
    ) -> bool:
        ok = bool(lhs > rhs + margin)
        self.assertions.append(Assertion(name, float(lhs), float(rhs), margin, provenance, ok, ">"))
        return ok

    def expect_true(self, name: str, condition: bool, provenance: str, computed: float = math.nan) -> bool:
        ok = bool(condition)
        self.assertions.append(Assertion(name, float(computed), None, 0.0, provenance, ok, "holds"))
        return ok


# ---------------------------------------------------------------------------
# Random generators
# ---------------------------------------------------------------------------


def resolve_space(name: str | Space) -> Space:
    """Short names used by the suites: R2, R3, H2, S2, cylinder, balloon."""
    if isinstance(name, Space):
        return name
    table = {
        "R1": Space.euclidean(1),
        "R2": Space.euclidean(2),
        "R3": Space.euclidean(3),
        "H2": Space.hyperbolic(2),
        "H3": Space.hyperbolic(3),
        "S2": Space.sphere(2),
        "cylinder": Space.flat_cylinder(1.0),
        "balloon": Space.balloon_string(1.0, 1.0),
    }
    try:
        return table[name]
    except KeyError:
        raise PreconditionError(f"Unknown suite space {name!r}. Known: {sorted(table)}") from None


def random_point(space: Space, rng: np.random.Generator, scale_: float = 1.0) -> Point:
    """Point uniform in a bounded chart region of *space*."""
    kind = space.kind
    if kind == "euclidean":
        return make_point(space, rng.uniform(-scale_, scale_, size=space.dim))
    if kind == "hyperbolic":
        return hyperbolic_point(space, rng.uniform(-scale_, scale_, size=space.dim))
    if kind == "sphere":
        return make_point(space, rng.normal(size=space.dim + 1))
    if kind == "flat_cylinder":
        return make_point(
            space, [rng.uniform(-scale_, scale_), rng.uniform(0.0, space.circumference)]
        )
    if rng.uniform() < 0.5:
        return string_point(space, rng.uniform(0.0, space.string_length))
    return make_point(space, rng.normal(size=3), "sphere")


def random_measure(
    space: Space,
    rng: np.random.Generator,
    max_atoms: int = 20,
    min_atoms: int = 1,
    scale_: float = 1.0,
) -> DiscreteMeasure:
    """Measure with a random atom count and symmetric Dirichlet weights."""
    n = int(rng.integers(min_atoms, max_atoms + 1))
    atoms = [random_point(space, rng, scale_) for _ in range(n)]
    weights = rng.dirichlet(np.ones(n))
    return make_measure(atoms, weights, renormalize=True)


def random_ensemble(
    space: Space,
    rng: np.random.Generator,
    max_measures: int = 5,
    max_atoms: int = 10,
    scale_: float = 1.0,
) -> MeasureEnsemble:
    k = int(rng.integers(1, max_measures + 1))
    measures = [random_measure(space, rng, max_atoms, scale_=scale_) for _ in range(k)]
    return make_ensemble(measures, rng.dirichlet(np.ones(k)), renormalize=True)


def random_field(m: DiscreteMeasure, rng: np.random.Generator, max_norm: float = 1.0) -> VectorField:
    """Tangent vectors of norm at most *max_norm*, one per atom."""
    vectors = []
    for p in m.atoms:
        raw = tangent(p, rng.normal(size=p.chart.shape[0]))
        length = norm(raw)
        if length == 0.0:
            vectors.append(raw)
            continue
        vectors.append(scale(raw, max_norm * rng.uniform() / length))
    return VectorField(m, tuple(vectors))


def _disk_measure(space: Space, rng: np.random.Generator, max_atoms: int = 10) -> DiscreteMeasure:
    n = int(rng.integers(1, max_atoms + 1))
    r = np.sqrt(rng.uniform(size=n))
    phi = rng.uniform(0.0, 2 * np.pi, size=n)
    atoms = [make_point(space, [ri * math.cos(p), ri * math.sin(p)]) for ri, p in zip(r, phi)]
    return make_measure(atoms, rng.dirichlet(np.ones(n)), renormalize=True)


def _trial_rngs(seed: int, trials: int) -> list[np.random.Generator]:
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(trials)]


def _finish(report: ExperimentReport, started: float) -> ExperimentReport:
    report.runtime = time.perf_counter() - started
    logger.info(
        "Experiment %s: %s (%d assertion(s), %.2fs)",
        report.name,
        "PASS" if report.passed else "FAIL",
        len(report.assertions),
        report.runtime,
    )
    return report


# ---------------------------------------------------------------------------
# Worked examples
# ---------------------------------------------------------------------------


def run_sphere_example(config: W2Config | None = None, n_equator: int = 360) -> ExperimentReport:
    """Ω = ½(δ_{δ_n} + δ_{δ_s}) on the sphere of circumference 2.

    Every measure on the equator is a barycenter of Ω with objective ¼, so
    the barycenter variance ¼ exceeds the mean variance 0.
    """
    config = config or W2Config()
    started = time.perf_counter()
    space = Space.sphere(2, circumference=2.0)
    report = ExperimentReport(
        "sphere", str(space), parameters={"circumference": 2.0, "n_equator": n_equator}
    )

    n, s = north_pole(space), south_pole(space)
    ens = make_ensemble([dirac(n), dirac(s)])
    z = spherical_point(space, math.pi / 2, 0.0)
    equator = uniform(
        [spherical_point(space, math.pi / 2, 2 * math.pi * k / n_equator) for k in range(n_equator)]
    )

    report.expect_close("pole_distance", distance(n, s), 1.0, 1e-12, "closed-form")
    obj_dirac = barycenter_objective(ens, dirac(z), config)
    obj_equator = barycenter_objective(ens, equator, config)
    report.expect_close("objective_equator_dirac", obj_dirac, 0.25, 1e-6, "closed-form")
    report.expect_close("objective_uniform_equator", obj_equator, 0.25, 1e-6, "closed-form")

    result = frechet_mean(equator, config.frechet, config.tolerances)
    report.expect_close("var_uniform_equator", result.value, 0.25, 1e-3, "closed-form")
    report.expect_le("grid_oracle_agreement", result.value, result.grid_minimum, 1e-6, "oracle")

    fs, tols = config.frechet, config.tolerances
    mean_var = 0.5 * variance(dirac(n), fs, tols) + 0.5 * variance(dirac(s), fs, tols)
    report.expect_close("mean_var", mean_var, 0.0, 0.0, "trivial")
    report.expect_gt("jensen_fails_on_sphere", result.value, mean_var, "expected")

    report.quantities.update(
        objective_dirac=obj_dirac,
        objective_equator=obj_equator,
        var_bar=result.value,
        mean_var=mean_var,
        frechet_multiple=result.multiple,
    )
    return _finish(report, started)


def run_balloon_example(eps: float = 0.1, config: W2Config | None = None) -> ExperimentReport:
    """Balloon (circumference 1) on a string (length 1).

    μ₀ = ½[δ_y + δ_{x₀}], μ₁ = ½[δ_y + δ_{x₁}] with y on the string and x₀, x₁
    on the sphere, all at distance ½ − ε from the gluing point. The linear
    interpolant keeps variance (½ − ε)² while the displacement interpolant
    at ½ has variance (1 − ε)²/4.
    """
    if not 0.0 < eps < 0.25:
        raise PreconditionError(f"eps must lie in (0, 1/4), got {eps!r}")
    config = config or W2Config()
    started = time.perf_counter()
    space = Space.balloon_string(circumference=1.0, string_length=1.0)
    report = ExperimentReport("balloon", str(space), parameters={"eps": eps})
    R = space.sphere_radius

    y = string_point(space, 0.5 - eps)
    x0 = spherical_point(space, eps / R, 0.0)
    x1 = spherical_point(space, eps / R, math.pi)
    mu0, mu1 = uniform([y, x0]), uniform([y, x1])
    mu_lin = linear_path(mu0, mu1, [0.0, 0.5, 1.0], tol=config.tolerances).measures[1]
    coupling = solve_ot(mu0, mu1, config.transport, config.tolerances)
    mu_w = displacement_interpolant(coupling, 0.5)

    expected_var = (0.5 - eps) ** 2
    expected_w = (1.0 - eps) ** 2 / 4
    fs, tol = config.frechet, config.tolerances
    var0, var1 = variance(mu0, fs, tol), variance(mu1, fs, tol)
    var_lin, var_w = variance(mu_lin, fs, tol), variance(mu_w, fs, tol)

    report.expect_close("var_mu0", var0, expected_var, 1e-12, "closed-form")
    report.expect_close("var_mu1", var1, expected_var, 1e-12, "closed-form")
    report.expect_close("var_linear_half", var_lin, expected_var, 1e-12, "closed-form")
    report.expect_close("var_displacement_half", var_w, expected_w, 1e-12, "closed-form")
    report.expect_gt("displacement_exceeds_linear", var_w, var_lin, "expected")
    report.expect_true(
        "displacement_half_is_y_and_north_pole",
        measures_close(mu_w, uniform([y, north_pole(space)]), tol=1e-9),
        "closed-form",
    )
    report.expect_close(
        "gap_expansion", var_w - var_lin, 0.5 * eps - 0.75 * eps**2, 1e-10, "closed-form"
    )
    report.quantities.update(
        var_mu0=var0, var_mu1=var1, var_linear=var_lin, var_displacement=var_w, gap=var_w - var_lin
    )
    return _finish(report, started)


def run_cylinder_counterexample(
    c: float = 1.0, delta: float = 0.1, config: W2Config | None = None
) -> ExperimentReport:
    """Displacement convexity of the variance fails on the flat cylinder ℝ × S¹_c.

    x = (0, 0) and y = (0, c/2) are cut points of each other; μ₀, μ₁ put
    half the mass on y and half at angle ±δ, so μ_½ = ½[δ_y + δ_x].
    """
    if not 0.0 < delta < c / 4:
        raise PreconditionError(f"delta must lie in (0, c/4), got delta={delta!r}, c={c!r}")
    config = config or W2Config()
    started = time.perf_counter()
    space = Space.flat_cylinder(c)
    report = ExperimentReport("cylinder", str(space), parameters={"c": c, "delta": delta})
    fs, tol = config.frechet, config.tolerances

    x = make_point(space, [0.0, 0.0])
    y = make_point(space, [0.0, c / 2])
    v = tangent(x, [0.0, delta])
    x_plus, x_minus = exp(v), exp(scale(v, -1.0))
    mu0, mu1 = uniform([y, x_plus]), uniform([y, x_minus])

    coupling = solve_ot(mu0, mu1, config.transport, tol)
    mu_half = displacement_interpolant(coupling, 0.5)
    report.expect_true(
        "half_is_y_and_x", measures_close(mu_half, uniform([y, x]), tol=1e-9), "closed-form"
    )

    var0, var1, var_half = variance(mu0, fs, tol), variance(mu1, fs, tol), variance(mu_half, fs, tol)
    mean_end = 0.5 * (var0 + var1)
    report.expect_close("var_half", var_half, c**2 / 16, 1e-10, "closed-form")
    report.expect_close("mean_endpoint_var", mean_end, (c / 2 - delta) ** 2 / 4, 1e-10, "closed-form")
    report.expect_close(
        "gap", var_half - mean_end, c**2 / 16 - (c / 2 - delta) ** 2 / 4, 1e-10, "closed-form"
    )
    report.expect_gt("convexity_fails", var_half, mean_end, "expected")

    display = (
        distance(x_plus, y) ** 2 + distance(x_minus, y) ** 2 - 2 * distance(x, y) ** 2
    )
    report.expect_close(
        "cut_locus_display", display, 2 * (c / 2 - delta) ** 2 - 2 * (c / 2) ** 2, 1e-10, "closed-form"
    )
    report.expect_gt("cut_locus_display_negative", 0.0, display, "closed-form")

    values = path_variances(displacement_path(coupling, tol=tol), fs, tol)
    cert = convexity_certificate(values, tol=tol.convexity)
    report.expect_true("path_not_convex", not cert.convex, "expected", cert.worst_violation)
    report.quantities.update(
        var_mu0=var0,
        var_mu1=var1,
        var_half=var_half,
        gap=var_half - mean_end,
        cut_locus_display=display,
        path_variances=values.tolist(),
        worst_second_difference=cert.worst_violation,
    )
    return _finish(report, started)


# ---------------------------------------------------------------------------
# Positive curvature
# ---------------------------------------------------------------------------


def _meridian_configuration(space: Space, eps: float, latitude: float) -> tuple[Point, Point, Point, Point]:
    """x₀, x₁ at latitude +φ and y₀, y₁ at −φ, each pair ε apart."""
    R = space.sphere_radius
    s, c = math.sin(latitude), math.cos(latitude)
    cos_gap = (math.cos(eps / R) - s**2) / c**2
    gap = math.acos(max(-1.0, min(1.0, cos_gap)))
    colat_top, colat_bottom = math.pi / 2 - latitude, math.pi / 2 + latitude
    x0 = spherical_point(space, colat_top, -gap / 2)
    x1 = spherical_point(space, colat_top, gap / 2)
    y0 = spherical_point(space, colat_bottom, -gap / 2)
    y1 = spherical_point(space, colat_bottom, gap / 2)
    return x0, x1, y0, y1


def _chord_violation(values: np.ndarray, grid: np.ndarray) -> tuple[float, float]:
    """Largest excess of the path values over the chord between the endpoints."""
    chord = (1 - grid) * values[0] + grid * values[-1]
    excess = values - chord
    idx = int(np.argmax(excess))
    return float(excess[idx]), float(grid[idx])


def _control_points(
    points: tuple[Point, ...], center: Point, space: Space
) -> list[Point]:
    """Carry a sphere configuration to ℝ² or H² through the tangent plane at *center*."""
    logs = log_many(center, list(points))
    # tangent plane at (R, 0, 0) is spanned by e₁, e₂
    planar = logs[:, 1:3]
    if space.kind == "euclidean":
        return [make_point(space, v) for v in planar]
    origin = hyperbolic_point(space, [0.0, 0.0])
    return [exp(tangent(origin, [0.0, v[0], v[1]])) for v in planar]


def _displacement_excess(
    points: list[Point], config: W2Config, grid: np.ndarray
) -> tuple[float, float, bool]:
    mu0, mu1 = uniform(points[:2]), uniform(points[2:])
    coupling = solve_ot(mu0, mu1, config.transport, config.tolerances)
    values = path_variances(
        displacement_path(coupling, grid, tol=config.tolerances), config.frechet, config.tolerances
    )
    excess, t = _chord_violation(values, grid)
    cert = convexity_certificate(values, grid, tol=config.tolerances.convexity)
    return excess, t, cert.convex


def run_positive_curvature_counterexample(
    eps: float = 0.1,
    budget: int = 16,
    seed: int | None = None,
    config: W2Config | None = None,
) -> ExperimentReport:
    """Seeded search for four points that break convexity on the sphere.

    Candidates are meridian configurations straddling the equator: both
    pairs are ε apart, the geodesics x₀→y₀ and x₁→y₁ spread apart while
    crossing the equator, and the pairing (x₀y₀, x₁y₁) is optimal. Every
    admissible configuration is then carried to ℝ² and H², where no violation
    may occur.
    """
    config = config or W2Config()
    seed = config.seed if seed is None else seed
    started = time.perf_counter()
    space = Space.sphere(2, circumference=2.0)
    report = ExperimentReport(
        "positive-curvature", str(space), parameters={"eps": eps, "budget": budget, "seed": seed}
    )
    rng = np.random.default_rng(seed)
    grid = default_grid()

    def admissible(points: tuple[Point, ...]) -> tuple[bool, float]:
        x0, x1, y0, y1 = points
        spread = max(
            distance(geodesic_point(x0, y0, float(t)), geodesic_point(x1, y1, float(t))) for t in grid[1:-1]
        )
        pairing_optimal = (
            distance(x0, y0) ** 2 + distance(x1, y1) ** 2
            <= distance(x0, y1) ** 2 + distance(x1, y0) ** 2
        )
        return spread > eps and pairing_optimal, spread

    batch: list[tuple[Point, ...]] = []
    best: dict[str, Any] | None = None
    for latitude in rng.uniform(0.05, 1.2, size=budget):
        points = _meridian_configuration(space, eps, float(latitude))
        ok, spread = admissible(points)
        if not ok:
            continue
        batch.append(points)
        excess, t, _ = _displacement_excess(list(points), config, grid)
        if best is None or excess > best["excess"]:
            best = {
                "latitude": float(latitude),
                "points": points,
                "excess": excess,
                "t": t,
                "spread": spread,
            }

    found = best is not None and best["excess"] > 1e-4
    report.expect_true("violation_found", found, "expected", best["excess"] if best else math.nan)
    if best is None:
        report.notes.append(f"no admissible configuration among {budget} candidates")
        return _finish(report, started)

    x0, x1, y0, y1 = best["points"]
    report.expect_close("pair_distance_x", distance(x0, x1), eps, 1e-9, "closed-form")
    report.expect_close("pair_distance_y", distance(y0, y1), eps, 1e-9, "closed-form")
    report.expect_gt("violation_exceeds_threshold", best["excess"], 1e-4, "expected")
    report.inputs["configuration"] = [p.chart.tolist() for p in best["points"]]

    # The whole admissible batch is replayed on the NPC controls.
    center = spherical_point(space, math.pi / 2, 0.0)
    for label, control_space in (("R2", Space.euclidean(2)), ("H2", Space.hyperbolic(2))):
        hits = convex_runs = 0
        worst = -math.inf
        for points in batch:
            mapped = tuple(_control_points(points, center, control_space))
            excess, _, convex = _displacement_excess(list(mapped), config, grid)
            ok, _ = admissible(mapped)
            hits += ok and excess > 1e-4
            convex_runs += convex
            worst = max(worst, excess)
        report.expect_close(f"{label}_control_violations", hits, 0, 0, "property")
        report.expect_close(f"{label}_control_convex", convex_runs, len(batch), 0, "property")
        report.expect_le(f"{label}_control_excess", worst, 0.0, config.tolerances.inequality, "property")
        report.quantities[f"{label}_control_excess"] = worst

    report.quantities.update(
        latitude=best["latitude"],
        excess=best["excess"],
        witness_t=best["t"],
        spread=best["spread"],
        batch_size=len(batch),
    )
    return _finish(report, started)


# ---------------------------------------------------------------------------
# Property suites
# ---------------------------------------------------------------------------


def run_convexity_suite(
    space: str | Space = "R2",
    trials: int = 100,
    seed: int | None = None,
    config: W2Config | None = None,
    max_atoms: int = 20,
) -> ExperimentReport:
    """Variance along random displacement paths and quasi-geodesics must be convex."""
    config = config or W2Config()
    seed = config.seed if seed is None else seed
    space = resolve_space(space)
    if not space.is_npc:
        raise PreconditionError(f"convexity suite needs an NPC space, got {space}")
    started = time.perf_counter()
    report = ExperimentReport(
        "convexity", str(space), parameters={"trials": trials, "seed": seed, "max_atoms": max_atoms}
    )
    tols = config.tolerances
    tol = tols.inequality
    worst_disp = worst_quasi = math.inf
    disp_pass = quasi_pass = 0
    for rng in _trial_rngs(seed, trials):
        mu = random_measure(space, rng, max_atoms)
        nu = random_measure(space, rng, max_atoms)
        coupling = solve_ot(mu, nu, config.transport, tols)
        values = path_variances(displacement_path(coupling, tol=tols), config.frechet, tols)
        cert = convexity_certificate(values, tol=tol)
        disp_pass += cert.convex
        worst_disp = min(worst_disp, cert.worst_violation)

        field_ = random_field(mu, rng)
        values = path_variances(quasi_geodesic(mu, field_, tol=tols), config.frechet, tols)
        cert = convexity_certificate(values, tol=tol)
        quasi_pass += cert.convex
        worst_quasi = min(worst_quasi, cert.worst_violation)

    report.expect_close("displacement_convex_trials", disp_pass, trials, 0, "property")
    report.expect_close("quasi_geodesic_convex_trials", quasi_pass, trials, 0, "property")
    report.expect_le("worst_displacement_violation", -worst_disp, 0.0, tol, "property")
    report.expect_le("worst_quasi_geodesic_violation", -worst_quasi, 0.0, tol, "property")
    report.quantities.update(
        worst_displacement_second_difference=worst_disp,
        worst_quasi_geodesic_second_difference=worst_quasi,
    )
    return _finish(report, started)


def run_projection_suite(
    k: int = 4,
    trials: int = 50,
    seed: int | None = None,
    config: W2Config | None = None,
    invariant_tests: int = 20,
) -> ExperimentReport:
    """var(P^W(μ)) ≤ var(μ) ≤ var(P^L²(μ)) for Z_k rotations in ℝ²."""
    if k not in (2, 3, 4, 6):
        raise PreconditionError(f"k must be one of 2, 3, 4, 6, got {k!r}")
    config = config or W2Config()
    seed = config.seed if seed is None else seed
    started = time.perf_counter()
    space = Space.euclidean(2)
    report = ExperimentReport(
        "projection", str(space), parameters={"k": k, "trials": trials, "seed": seed}
    )
    tol = config.tolerances.inequality
    G = cyclic_rotation_group(space, k)

    # hand-computed cases
    line = Space.euclidean(1)
    seg = uniform([make_point(line, [0.0]), make_point(line, [1.0])])
    hand = sandwich_report(reflection_group(line), seg, config)
    report.expect_close("reflection_var_w", hand.var_w, 0.25, 1e-12, "closed-form")
    report.expect_close("reflection_var_mu", hand.var_mu, 0.25, 1e-12, "closed-form")
    report.expect_close("reflection_var_l2", hand.var_l2, 0.5, 1e-12, "closed-form")

    unit = dirac(make_point(space, [1.0, 0.0]))
    orbit = sandwich_report(G, unit, config)
    report.expect_close("unit_dirac_var_w", orbit.var_w, 0.0, 1e-12, "closed-form")
    report.expect_close("unit_dirac_var_l2", orbit.var_l2, 1.0, 1e-12, "closed-form")

    rngs = _trial_rngs(seed, trials + 1)
    trivial = sandwich_report(trivial_group(space), _disk_measure(space, rngs[0]), config)
    report.expect_close("trivial_group_left", trivial.var_w, trivial.var_mu, 1e-9, "trivial")
    report.expect_close("trivial_group_right", trivial.var_l2, trivial.var_mu, 1e-9, "trivial")

    left = right = invariant = 0
    first_mu: DiscreteMeasure | None = None
    for rng in rngs[1:]:
        mu = _disk_measure(space, rng)
        if first_mu is None:
            first_mu = mu
        rep = sandwich_report(G, mu, config)
        left += bool(rep.left_holds)
        right += rep.right_holds
        invariant += rep.invariant
    report.expect_close("left_inequality_trials", left, trials, 0, "property")
    report.expect_close("right_inequality_trials", right, trials, 0, "property")
    report.expect_close("invariant_projection_trials", invariant, trials, 0, "property")

    if first_mu is not None and invariant_tests > 0:
        projection = w2_projection(G, first_mu, config)
        best_cost = projection.objective
        test_rng = np.random.default_rng(np.random.SeedSequence(seed).spawn(trials + 2)[-1])
        worst_margin = math.inf
        for _ in range(invariant_tests):
            nu = l2_projection(G, _disk_measure(space, test_rng))
            cost = barycenter_objective(make_ensemble([first_mu]), nu, config)
            worst_margin = min(worst_margin, cost - best_cost)
        report.expect_le("projection_is_nearest_invariant", -worst_margin, 0.0, 1e-6, "property")
        report.quantities["nearest_invariant_margin"] = worst_margin

    report.quantities.update(left_pass=left, right_pass=right, invariant_pass=invariant)
    return _finish(report, started)


def run_jensen_suite(
    space: str | Space = "R2",
    trials: int = 50,
    seed: int | None = None,
    config: W2Config | None = None,
) -> ExperimentReport:
    """Barycenter variance against mean and linear variances on random ensembles.

    On NPC spaces every converged barycenter must satisfy
    var(μ̄) ≤ Σ λᵢ var(μᵢ) ≤ var(Σ λᵢ μᵢ); elsewhere only the right
    inequality, which needs no curvature assumption, is checked.
    """
    config = config or W2Config()
    seed = config.seed if seed is None else seed
    space = resolve_space(space)
    started = time.perf_counter()
    report = ExperimentReport("jensen", str(space), parameters={"trials": trials, "seed": seed})
    tol = config.tolerances

    converged = jensen_ok = comparison_ok = linear_ok = 0
    for rng in _trial_rngs(seed, trials):
        ens = random_ensemble(space, rng)
        if space.is_npc:
            result = best_barycenter(ens, config)
            rep = jensen_gap(ens, result, config)
            linear_ok += rep.linear_holds
            if rep.jensen_holds is not None:
                converged += 1
                jensen_ok += rep.jensen_holds
                comparison_ok += bool(rep.comparison_holds)
        else:
            mean_var = sum(lam * variance(mu, config.frechet, tol) for lam, mu in ens.entries)
            linear_var = variance(mixture(ens, tol), config.frechet, tol)
            linear_ok += linear_var >= mean_var - tol.inequality

    report.expect_close("linear_inequality_trials", linear_ok, trials, 0, "property")
    if space.is_npc:
        report.expect_close("jensen_inequality_converged", jensen_ok, converged, 0, "property")
        report.expect_close("comparison_inequality_converged", comparison_ok, converged, 0, "property")
        report.quantities["converged_runs"] = converged
    report.quantities.update(linear_pass=linear_ok, jensen_pass=jensen_ok)
    return _finish(report, started)


def _brute_force_assignment(cost: np.ndarray) -> float:
    n = cost.shape[0]
    return min(cost[range(n), perm].sum() for perm in itertools.permutations(range(n))) / n


def _lp_cost(a: np.ndarray, b: np.ndarray, cost: np.ndarray) -> float:
    n, m = cost.shape
    rows = np.zeros((n, n * m))
    cols = np.zeros((m, n * m))
    for i in range(n):
        rows[i, i * m : (i + 1) * m] = 1.0
    for j in range(m):
        cols[j, j::m] = 1.0
    res = linprog(
        cost.ravel(),
        A_eq=np.vstack([rows, cols]),
        b_eq=np.concatenate([a, b]),
        bounds=(0, None),
        method="highs",
    )
    return float(res.fun)


def run_oracle_suite(
    trials: int = 200,
    seed: int | None = None,
    config: W2Config | None = None,
    fv_trials: int = 50,
) -> ExperimentReport:
    """Exact OT against brute force / an independent LP, and first variation
    against central finite differences."""
    config = config or W2Config()
    seed = config.seed if seed is None else seed
    started = time.perf_counter()
    report = ExperimentReport(
        "oracle", "mixed", parameters={"trials": trials, "fv_trials": fv_trials, "seed": seed}
    )
    spaces = [resolve_space(n) for n in ("R2", "S2", "H2", "cylinder")]
    simplex_only = TransportSettings(
        max_atoms=config.transport.max_atoms,
        assignment_fast_path=False,
        num_iter_max=config.transport.num_iter_max,
    )

    worst_ot = 0.0
    for idx, rng in enumerate(_trial_rngs(seed, trials)):
        space = spaces[idx % len(spaces)]
        if idx % 2 == 0:
            n = int(rng.integers(1, 7))
            mu = uniform([random_point(space, rng) for _ in range(n)])
            nu = uniform([random_point(space, rng) for _ in range(n)])
            cost = pairwise_distances(list(mu.atoms), list(nu.atoms)) ** 2
            if len(mu) == len(nu):
                oracle = _brute_force_assignment(cost)
            else:  # merged atoms
                oracle = _lp_cost(mu.weights, nu.weights, cost)
        else:
            mu = random_measure(space, rng, 6)
            nu = random_measure(space, rng, 6)
            cost = pairwise_distances(list(mu.atoms), list(nu.atoms)) ** 2
            oracle = _lp_cost(mu.weights, nu.weights, cost)
        for settings in (config.transport, simplex_only):
            worst_ot = max(worst_ot, abs(solve_ot(mu, nu, settings).cost - oracle))
    report.expect_le("ot_cost_vs_oracle", worst_ot, 0.0, 1e-9, "oracle")

    h = 1e-4
    hyperbolic = resolve_space("H2")
    worst_rel = 0.0
    for rng in _trial_rngs(seed + 1, fv_trials):
        mu = random_measure(hyperbolic, rng, 6, min_atoms=2)
        gamma0 = frechet_mean(mu, config.frechet, config.tolerances).point
        V = random_field(mu, rng)
        fv = first_variation(mu, V, gamma0, config.tolerances)
        shifted = [
            objective(
                gamma0,
                DiscreteMeasure(mu.space, tuple(exp(scale(v, s)) for v in V.vectors), mu.weights),
            )
            for s in (h, -h)
        ]
        fd = (shifted[0] - shifted[1]) / (2 * h)
        worst_rel = max(worst_rel, abs(fd - fv) / max(abs(fv), 1e-2))
    report.expect_le("first_variation_vs_finite_difference", worst_rel, 0.0, 1e-5, "oracle")
    report.quantities.update(worst_ot_error=worst_ot, worst_first_variation_rel_error=worst_rel)
    return _finish(report, started)


# ---------------------------------------------------------------------------
# Registry
# ---------------------------------------------------------------------------


EXPERIMENTS: dict[str, Callable[..., ExperimentReport]] = {
    "sphere": lambda config, seed=None, **kw: run_sphere_example(config, **kw),
    "balloon": lambda config, seed=None, **kw: run_balloon_example(config=config, **kw),
    "cylinder": lambda config, seed=None, **kw: run_cylinder_counterexample(config=config, **kw),
    "positive-curvature": lambda config, seed=None, **kw: run_positive_curvature_counterexample(
        seed=seed, config=config, **kw
    ),
    "convexity": lambda config, seed=None, **kw: run_convexity_suite(seed=seed, config=config, **kw),
    "projection": lambda config, seed=None, **kw: run_projection_suite(seed=seed, config=config, **kw),
    "jensen": lambda config, seed=None, **kw: run_jensen_suite(seed=seed, config=config, **kw),
    "oracle": lambda config, seed=None, **kw: run_oracle_suite(seed=seed, config=config, **kw),
}


def run_verify(config: W2Config | None = None, quick: bool = False) -> list[ExperimentReport]:
    """The full acceptance suite, in a fixed order.

    ``quick`` shrinks trial counts for smoke runs; the checks are unchanged.
    """
    config = config or W2Config()
    seed = config.seed
    scale_ = 10 if quick else 1
    reports = [
        run_sphere_example(config),
        run_balloon_example(0.1, config),
        run_cylinder_counterexample(1.0, 0.1, config),
        run_positive_curvature_counterexample(seed=seed, config=config),
        run_convexity_suite("R2", 100 // scale_, seed, config),
        run_convexity_suite("H2", 100 // scale_, seed, config),
        run_jensen_suite("R2", 50 // scale_, seed, config),
        run_jensen_suite("H2", 50 // scale_, seed, config),
        run_jensen_suite("S2", 50 // scale_, seed, config),
    ]
    for k in (2, 3, 4, 6):
        reports.append(run_projection_suite(k, 50 // scale_, seed, config))
    reports.append(run_oracle_suite(200 // scale_, seed, config, fv_trials=50 // scale_))
    failed = [r.name for r in reports if not r.passed]
    logger.info("Verify: %d report(s), %d failed %s", len(reports), len(failed), failed or "")
    return reports
