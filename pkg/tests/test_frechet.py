import math

import numpy as np
import pytest

from w2geo.config import FrechetSettings
from w2geo.errors import ConvergenceError, MalformedInputError, PreconditionError
from w2geo.geometry import (
    distance,
    hyperbolic_point,
    make_point,
    north_pole,
    south_pole,
    spherical_point,
    tangent,
    zero_vector,
)
from w2geo.interpolate import VectorField, displacement_path
from w2geo.frechet import (
    first_variation,
    frechet_mean,
    karcher_residual,
    objective,
    path_variances,
    variance,
    variance_with_certificate,
    weighted_frechet_mean,
)
from w2geo.measure import dirac, uniform
from w2geo.transport import solve_ot


# ---------------------------------------------------------------------------
# Euclidean closed form
# ---------------------------------------------------------------------------

def test_weighted_euclidean_mean(weighted_plane_measure):
    result = frechet_mean(weighted_plane_measure)
    assert result.point.chart.tolist() == pytest.approx([0.5, 0.75])
    assert result.value == pytest.approx(2.4375)
    assert result.method == "gradient"
    assert result.residual == pytest.approx(0.0, abs=1e-15)


def test_objective_matches_variance_at_mean(weighted_plane_measure):
    result = frechet_mean(weighted_plane_measure)
    assert objective(result.point, weighted_plane_measure) == pytest.approx(result.value)


def test_single_point_has_zero_variance(sphere2):
    result = weighted_frechet_mean([north_pole(sphere2)])
    assert result.value == 0.0
    assert result.residual == 0.0


def test_empty_point_set_rejected():
    with pytest.raises(MalformedInputError):
        weighted_frechet_mean([])


def test_variance_with_certificate(segment):
    value, result = variance_with_certificate(segment)
    assert value == pytest.approx(0.25)
    assert result.value == value


# ---------------------------------------------------------------------------
# Hyperbolic descent
# ---------------------------------------------------------------------------

def test_hyperbolic_symmetric_pair(h2):
    a = hyperbolic_point(h2, [math.sinh(1.0), 0.0])
    b = hyperbolic_point(h2, [-math.sinh(1.0), 0.0])
    result = weighted_frechet_mean([a, b])
    assert distance(result.point, hyperbolic_point(h2, [0.0, 0.0])) < 1e-9
    assert result.value == pytest.approx(1.0, abs=1e-10)
    assert result.residual <= 1e-10


def test_hyperbolic_residual_vanishes(h2, rng):
    points = [hyperbolic_point(h2, rng.uniform(-1, 1, size=2)) for _ in range(6)]
    weights = rng.dirichlet(np.ones(6))
    result = weighted_frechet_mean(points, weights)
    assert karcher_residual(result.point, points, weights) <= 1e-10


def test_hyperbolic_descent_iteration_cap(h2):
    points = [hyperbolic_point(h2, [1.0, 0.0]), hyperbolic_point(h2, [0.0, 2.0])]
    with pytest.raises(ConvergenceError, match="did not converge"):
        weighted_frechet_mean(points, settings=FrechetSettings(max_iter=1))


# ---------------------------------------------------------------------------
# Grid search on non-NPC spaces
# ---------------------------------------------------------------------------

def test_sphere_pair_on_equator(sphere2):
    a = spherical_point(sphere2, math.pi / 2, -0.5)
    b = spherical_point(sphere2, math.pi / 2, 0.5)
    result = weighted_frechet_mean([a, b])
    assert result.method == "grid"
    assert result.point.chart.tolist() == pytest.approx([1.0, 0.0, 0.0], abs=1e-7)
    assert result.value == pytest.approx(0.25, abs=1e-10)
    assert not result.multiple


def test_sphere_poles_have_many_means(sphere2):
    result = frechet_mean(uniform([north_pole(sphere2), south_pole(sphere2)]))
    assert result.value == pytest.approx((math.pi / 2) ** 2, abs=1e-9)
    assert result.multiple
    assert result.alternatives


def test_grid_result_not_above_grid_minimum(sphere2, rng):
    from w2geo.experiments import random_measure

    m = random_measure(sphere2, rng, 5, min_atoms=2)
    result = frechet_mean(m)
    assert result.value <= result.grid_minimum + 1e-12


def test_cylinder_half_turn_has_two_means(cylinder):
    m = uniform([make_point(cylinder, [0.0, 0.0]), make_point(cylinder, [0.0, 0.5])])
    result = frechet_mean(m)
    assert result.value == pytest.approx(0.0625, abs=1e-12)
    assert result.multiple
    angles = sorted([result.point.chart[1], result.alternatives[0].chart[1]])
    assert angles == pytest.approx([0.25, 0.75], abs=1e-9)


def test_balloon_string_mean(balloon):
    from w2geo.geometry import string_point

    m = uniform([string_point(balloon, 0.2), string_point(balloon, 0.6)])
    result = frechet_mean(m)
    assert result.value == pytest.approx(0.04, abs=1e-12)
    assert result.point.tag == "string"
    assert result.point.chart[0] == pytest.approx(0.4, abs=1e-9)


def test_balloon_mean_at_gluing_point(balloon):
    from w2geo.geometry import is_gluing_point, string_point

    R = balloon.sphere_radius
    m = uniform([string_point(balloon, 0.4), spherical_point(balloon, 0.1 / R, 0.0)])
    result = frechet_mean(m)
    assert result.value == pytest.approx(0.16, abs=1e-12)
    assert is_gluing_point(result.point)
    assert result.converged
    assert result.iterations < 1000


def test_exhausted_refinement_is_reported(cylinder):
    m = uniform([make_point(cylinder, [0.0, 0.1003]), make_point(cylinder, [0.0, 0.3])])
    result = frechet_mean(m, FrechetSettings(max_iter=1))
    assert not result.converged
    assert result.value == pytest.approx(0.09985**2, abs=1e-6)
    assert frechet_mean(m).converged


# ---------------------------------------------------------------------------
# Residuals and first variation
# ---------------------------------------------------------------------------

def test_residual_undefined_on_cut_locus(sphere2):
    assert karcher_residual(north_pole(sphere2), [south_pole(sphere2)]) is None


def test_residual_undefined_at_gluing_point(balloon):
    from w2geo.geometry import gluing_point, string_point

    assert karcher_residual(gluing_point(balloon), [string_point(balloon, 0.3)]) is None


def test_first_variation_closed_form(segment, plane):
    gamma0 = make_point(plane, [0.5, 0.0])
    V = VectorField(segment, (tangent(segment.atoms[0], [1.0, 0.0]), zero_vector(segment.atoms[1])))
    assert first_variation(segment, V, gamma0) == pytest.approx(-0.5)


def test_first_variation_of_rigid_vertical_shift_is_zero(segment, plane):
    gamma0 = make_point(plane, [0.5, 0.0])
    V = VectorField(segment, tuple(tangent(p, [0.0, 1.0]) for p in segment.atoms))
    assert first_variation(segment, V, gamma0) == pytest.approx(0.0)


def test_first_variation_requires_mean(segment, plane):
    V = VectorField(segment, tuple(zero_vector(p) for p in segment.atoms))
    with pytest.raises(PreconditionError, match="not a Fréchet mean"):
        first_variation(segment, V, make_point(plane, [0.0, 0.0]))


def test_first_variation_matches_finite_difference(h2, rng):
    from w2geo.experiments import random_field, random_measure
    from w2geo.geometry import exp, scale
    from w2geo.measure import DiscreteMeasure

    mu = random_measure(h2, rng, 5, min_atoms=2)
    gamma0 = frechet_mean(mu).point
    V = random_field(mu, rng)
    h = 1e-4
    moved = [
        objective(gamma0, DiscreteMeasure(h2, tuple(exp(scale(v, s)) for v in V.vectors), mu.weights))
        for s in (h, -h)
    ]
    fd = (moved[0] - moved[1]) / (2 * h)
    assert first_variation(mu, V, gamma0) == pytest.approx(fd, rel=1e-5, abs=1e-7)


# ---------------------------------------------------------------------------
# Paths
# ---------------------------------------------------------------------------

def test_path_variances_of_translation(segment, shifted_segment):
    values = path_variances(displacement_path(solve_ot(segment, shifted_segment)))
    assert values.tolist() == pytest.approx([0.25] * 11)


def test_variance_of_dirac(h2):
    assert variance(dirac(hyperbolic_point(h2, [0.3, 0.1]))) == 0.0


# ---------------------------------------------------------------------------
# Variance under isometries and perturbations
# ---------------------------------------------------------------------------

@pytest.mark.parametrize("kind", ["plane", "sphere2", "h2", "cylinder"])
def test_variance_is_isometry_invariant(kind, rng, request):
    from w2geo.experiments import random_measure
    from w2geo.geometry import compose, cylinder_isometry, hyperbolic_boost, rotation, translation
    from w2geo.measure import pushforward

    space = request.getfixturevalue(kind)
    g = {
        "euclidean": lambda: compose(translation(space, [2.0, -1.0]), rotation(space, 0.4)),
        "sphere": lambda: compose(rotation(space, 1.2), rotation(space, 0.5, axes=(1, 2))),
        "hyperbolic": lambda: compose(hyperbolic_boost(space, 0.7), rotation(space, 2.5)),
        "flat_cylinder": lambda: cylinder_isometry(space, 1.5, 0.3, angular_reflect=True),
    }[space.kind]()
    for _ in range(3):
        m = random_measure(space, rng, 5)
        assert variance(pushforward(g, m)) == pytest.approx(variance(m), abs=1e-9)


@pytest.mark.parametrize("kind", ["plane", "sphere2", "h2", "cylinder"])
def test_variance_is_continuous_in_w2(kind, rng, request):
    from w2geo.experiments import random_measure
    from w2geo.transport import w2_distance

    space = request.getfixturevalue(kind)
    for _ in range(3):
        mu, nu = random_measure(space, rng, 5), random_measure(space, rng, 5)
        gap = abs(math.sqrt(variance(mu)) - math.sqrt(variance(nu)))
        assert gap <= w2_distance(mu, nu) + 1e-8
