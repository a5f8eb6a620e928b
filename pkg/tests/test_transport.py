import math

import numpy as np
import pytest

from w2geo.config import TransportSettings
from w2geo.errors import MalformedInputError, SpaceMismatchError
from w2geo.geometry import make_point, north_pole, south_pole, string_point
from w2geo.measure import dirac, make_measure, uniform
from w2geo.transport import (
    coupling_cost,
    coupling_frame,
    solve_ot,
    w2_distance,
    w2_squared,
)

_SIMPLEX = TransportSettings(assignment_fast_path=False)


# ---------------------------------------------------------------------------
# Closed-form costs
# ---------------------------------------------------------------------------

def test_translated_segment_costs_one(segment, shifted_segment):
    assert w2_squared(segment, shifted_segment) == pytest.approx(1.0)
    assert w2_distance(segment, shifted_segment) == pytest.approx(1.0)


def test_identical_measures_cost_zero(weighted_plane_measure):
    assert w2_squared(weighted_plane_measure, weighted_plane_measure) == pytest.approx(0.0, abs=1e-15)


def test_dirac_to_measure_is_objective(plane, weighted_plane_measure):
    origin = dirac(make_point(plane, [0.0, 0.0]))
    # 0.5·0 + 0.25·4 + 0.25·9
    assert w2_squared(origin, weighted_plane_measure) == pytest.approx(3.25)


def test_crossing_assignment_avoided(line):
    mu = uniform([make_point(line, [0.0]), make_point(line, [1.0])])
    nu = uniform([make_point(line, [2.0]), make_point(line, [3.0])])
    c = solve_ot(mu, nu)
    assert c.cost == pytest.approx(4.0)
    assert sorted(c.entries) == [(0, 0, 0.5), (1, 1, 0.5)]


def test_poles_on_short_sphere(short_sphere):
    assert w2_squared(dirac(north_pole(short_sphere)), dirac(south_pole(short_sphere))) == pytest.approx(1.0)


def test_balloon_string_cost(balloon):
    mu = dirac(string_point(balloon, 0.2))
    nu = dirac(north_pole(balloon))
    assert w2_distance(mu, nu) == pytest.approx(0.7)


# ---------------------------------------------------------------------------
# Solver paths
# ---------------------------------------------------------------------------

def test_equal_uniform_uses_assignment(segment, shifted_segment):
    c = solve_ot(segment, shifted_segment)
    assert c.is_assignment
    assert len(c.entries) == 2


def test_mass_splitting_plan(line):
    mu = dirac(make_point(line, [0.0]))
    nu = uniform([make_point(line, [-1.0]), make_point(line, [1.0])])
    c = solve_ot(mu, nu)
    assert not c.is_assignment
    assert c.cost == pytest.approx(1.0)
    assert c.dense().sum(axis=1).tolist() == pytest.approx([1.0])
    assert c.dense().sum(axis=0).tolist() == pytest.approx([0.5, 0.5])


@pytest.mark.parametrize("kind", ["plane", "sphere2", "h2", "cylinder"])
def test_assignment_and_simplex_agree(kind, rng, request):
    from w2geo.experiments import random_point

    space = request.getfixturevalue(kind)
    mu = uniform([random_point(space, rng) for _ in range(5)])
    nu = uniform([random_point(space, rng) for _ in range(5)])
    fast = solve_ot(mu, nu)
    slow = solve_ot(mu, nu, _SIMPLEX)
    assert fast.cost == pytest.approx(slow.cost, abs=1e-12)


def test_marginals_match_weights(weighted_plane_measure, segment):
    c = solve_ot(weighted_plane_measure, segment)
    dense = c.dense()
    assert np.allclose(dense.sum(axis=1), weighted_plane_measure.weights, atol=1e-12)
    assert np.allclose(dense.sum(axis=0), segment.weights, atol=1e-12)


def test_coupling_cost_recomputed(weighted_plane_measure, shifted_segment):
    c = solve_ot(weighted_plane_measure, shifted_segment)
    assert coupling_cost(c) == pytest.approx(c.cost)


def test_solver_is_deterministic(h2, rng):
    from w2geo.experiments import random_measure

    mu, nu = random_measure(h2, rng, 8), random_measure(h2, rng, 8)
    first, second = solve_ot(mu, nu), solve_ot(mu, nu)
    assert first.entries == second.entries
    assert first.cost == second.cost


def test_symmetric_cost(h2, rng):
    from w2geo.experiments import random_measure

    mu, nu = random_measure(h2, rng, 6), random_measure(h2, rng, 6)
    assert w2_squared(mu, nu) == pytest.approx(w2_squared(nu, mu), abs=1e-12)


# ---------------------------------------------------------------------------
# Errors
# ---------------------------------------------------------------------------

def test_space_mismatch(segment, line):
    with pytest.raises(SpaceMismatchError):
        solve_ot(segment, dirac(make_point(line, [0.0])))


def test_atom_limit(line):
    mu = make_measure([make_point(line, [float(k)]) for k in range(5)])
    with pytest.raises(MalformedInputError, match="above the limit"):
        solve_ot(mu, mu, TransportSettings(max_atoms=4))


# ---------------------------------------------------------------------------
# Tables
# ---------------------------------------------------------------------------

def test_coupling_frame_columns(segment, shifted_segment):
    frame = coupling_frame(solve_ot(segment, shifted_segment))
    assert list(frame.columns) == ["source", "target", "mass", "sq_distance"]
    assert frame["mass"].sum() == pytest.approx(1.0)
    assert frame["sq_distance"].tolist() == pytest.approx([1.0, 1.0])


def test_distance_is_sqrt_of_cost(weighted_plane_measure, shifted_segment):
    assert w2_distance(weighted_plane_measure, shifted_segment) == pytest.approx(
        math.sqrt(w2_squared(weighted_plane_measure, shifted_segment))
    )


# ---------------------------------------------------------------------------
# Metric properties on random measures
# ---------------------------------------------------------------------------

@pytest.mark.parametrize("kind", ["plane", "sphere2", "h2", "cylinder", "balloon"])
def test_w2_triangle_inequality(kind, rng, request):
    from w2geo.experiments import random_measure

    space = request.getfixturevalue(kind)
    for _ in range(10):
        a, b, c = (random_measure(space, rng, 6) for _ in range(3))
        assert w2_distance(a, c) <= w2_distance(a, b) + w2_distance(b, c) + 1e-8


@pytest.mark.parametrize("kind", ["sphere2", "h2", "cylinder"])
def test_w2_isometry_invariant(kind, rng, request):
    from w2geo.experiments import random_measure
    from w2geo.geometry import compose, cylinder_isometry, hyperbolic_boost, rotation
    from w2geo.measure import pushforward

    space = request.getfixturevalue(kind)
    if space.kind == "sphere":
        g = compose(rotation(space, 0.8), rotation(space, 0.3, axes=(0, 2)))
    elif space.kind == "hyperbolic":
        g = compose(hyperbolic_boost(space, 0.5), rotation(space, 1.7))
    else:
        g = cylinder_isometry(space, 2.0, 0.35, angular_reflect=True)
    for _ in range(5):
        mu, nu = random_measure(space, rng, 6), random_measure(space, rng, 6)
        moved = w2_squared(pushforward(g, mu), pushforward(g, nu))
        assert moved == pytest.approx(w2_squared(mu, nu), abs=1e-9)
