import math

import numpy as np
import pytest

from w2geo.errors import IsometryError, SpaceMismatchError
from w2geo.geometry import (
    identity,
    make_point,
    north_pole,
    rotation,
    spherical_point,
)
from w2geo.measure import dirac, measures_close, uniform
from w2geo.symmetry import (
    IsometryGroup,
    _invariant_barycenter,
    antipodal_group,
    cyclic_rotation_group,
    generate_group,
    is_invariant,
    l2_projection,
    orbit_ensemble,
    reflection_group,
    sandwich_report,
    trivial_group,
    w2_projection,
)
from w2geo.config import W2Config
from w2geo.wbarycenter import barycenter_objective


# ---------------------------------------------------------------------------
# Groups
# ---------------------------------------------------------------------------

def test_generate_quarter_turns(plane):
    G = generate_group([rotation(plane, math.pi / 2)])
    assert len(G) == 4
    assert G.is_closed()
    assert G.haar.tolist() == [0.25] * 4


def test_generate_group_rejects_infinite_closure(plane):
    with pytest.raises(IsometryError, match="exceeds 16"):
        generate_group([rotation(plane, 1.0)], max_order=16)


def test_generate_group_needs_space_or_generator():
    with pytest.raises(IsometryError):
        generate_group([])


def test_empty_generators_with_space_is_trivial(plane):
    assert len(generate_group([], plane)) == 1


def test_first_element_must_be_identity(plane):
    with pytest.raises(IsometryError, match="identity"):
        IsometryGroup(plane, (rotation(plane, 0.5),))


@pytest.mark.parametrize("k", [1, 2, 3, 4, 6])
def test_cyclic_group_order(plane, k):
    G = cyclic_rotation_group(plane, k)
    assert len(G) == k
    assert G.is_closed()


def test_cyclic_group_on_cylinder(cylinder):
    G = cyclic_rotation_group(cylinder, 4)
    assert len(G) == 4
    assert G.is_closed()


def test_cyclic_group_order_must_be_positive(plane):
    with pytest.raises(IsometryError):
        cyclic_rotation_group(plane, 0)


def test_index_of(plane):
    G = cyclic_rotation_group(plane, 4)
    assert G.index_of(identity(plane)) == 0
    assert G.index_of(rotation(plane, 0.3)) is None


def test_reflection_and_antipodal_groups(line, sphere2):
    assert len(reflection_group(line)) == 2
    assert len(antipodal_group(sphere2)) == 2


def test_group_mixing_spaces_rejected(plane, line):
    with pytest.raises(SpaceMismatchError):
        IsometryGroup(plane, (identity(plane), identity(line)))


# ---------------------------------------------------------------------------
# Orbits and invariance
# ---------------------------------------------------------------------------

def test_orbit_ensemble(plane):
    G = cyclic_rotation_group(plane, 4)
    ens = orbit_ensemble(G, dirac(make_point(plane, [1.0, 0.0])))
    assert len(ens) == 4
    assert ens.weights.tolist() == [0.25] * 4


def test_orbit_ensemble_space_mismatch(plane, line):
    with pytest.raises(SpaceMismatchError):
        orbit_ensemble(cyclic_rotation_group(plane, 2), dirac(make_point(line, [0.0])))


def test_l2_projection_is_invariant(plane, rng):
    from w2geo.experiments import random_measure

    G = cyclic_rotation_group(plane, 3)
    projected = l2_projection(G, random_measure(plane, rng, 5))
    assert is_invariant(G, projected) == []


@pytest.mark.parametrize("kind", ["plane", "sphere2", "h2"])
def test_l2_projection_is_idempotent(kind, rng, request):
    from w2geo.experiments import random_measure

    space = request.getfixturevalue(kind)
    G = antipodal_group(space) if space.kind == "sphere" else cyclic_rotation_group(space, 6)
    for _ in range(3):
        once = l2_projection(G, random_measure(space, rng, 5))
        assert measures_close(l2_projection(G, once), once)


@pytest.mark.parametrize("kind", ["plane", "h2"])
def test_orbit_members_share_variance(kind, rng, request):
    from w2geo.experiments import random_measure
    from w2geo.frechet import variance
    from w2geo.measure import pushforward

    space = request.getfixturevalue(kind)
    G = cyclic_rotation_group(space, 5)
    m = random_measure(space, rng, 6)
    base = variance(m)
    for g in G.elements:
        assert variance(pushforward(g, m)) == pytest.approx(base, abs=1e-9)


def test_is_invariant_lists_violations(plane):
    G = cyclic_rotation_group(plane, 4)
    m = uniform([make_point(plane, [1.0, 0.0]), make_point(plane, [-1.0, 0.0])])
    assert is_invariant(G, m) == [1, 3]


def test_poles_invariant_under_rotation(sphere2):
    G = cyclic_rotation_group(sphere2, 6)
    assert is_invariant(G, dirac(north_pole(sphere2))) == []


# ---------------------------------------------------------------------------
# Projections
# ---------------------------------------------------------------------------

def test_w2_projection_of_unit_dirac(plane):
    G = cyclic_rotation_group(plane, 4)
    result = w2_projection(G, dirac(make_point(plane, [1.0, 0.0])))
    assert measures_close(result.measure, dirac(make_point(plane, [0.0, 0.0])))
    assert result.objective == pytest.approx(1.0)
    assert not result.warnings


def test_w2_projection_trivial_group_is_identity(weighted_plane_measure, plane):
    result = w2_projection(trivial_group(plane), weighted_plane_measure)
    assert measures_close(result.measure, weighted_plane_measure)


def test_w2_projection_is_invariant(plane, rng):
    from w2geo.experiments import _disk_measure

    G = cyclic_rotation_group(plane, 3)
    m = _disk_measure(plane, rng)
    result = w2_projection(G, m)
    assert is_invariant(G, result.measure) == []


def test_orbit_restricted_iteration(plane):
    G = cyclic_rotation_group(plane, 4)
    m = dirac(make_point(plane, [1.0, 0.0]))
    ens = orbit_ensemble(G, m)
    result = _invariant_barycenter(G, m, ens, W2Config())
    assert measures_close(result.measure, dirac(make_point(plane, [0.0, 0.0])))
    assert result.objective == pytest.approx(1.0)
    assert result.stop_reason.startswith("orbit iteration")


def test_orbit_restricted_iteration_stays_invariant(plane, rng):
    from w2geo.experiments import _disk_measure

    G = cyclic_rotation_group(plane, 6)
    m = _disk_measure(plane, rng, max_atoms=6)
    ens = orbit_ensemble(G, m)
    result = _invariant_barycenter(G, m, ens, W2Config())
    assert is_invariant(G, result.measure) == []
    assert result.objective <= barycenter_objective(ens, l2_projection(G, m)) + 1e-12


# ---------------------------------------------------------------------------
# Sandwich
# ---------------------------------------------------------------------------

def test_reflection_sandwich_closed_form(line):
    m = uniform([make_point(line, [0.0]), make_point(line, [1.0])])
    rep = sandwich_report(reflection_group(line), m)
    assert rep.var_w == pytest.approx(0.25)
    assert rep.var_mu == pytest.approx(0.25)
    assert rep.var_l2 == pytest.approx(0.5)
    assert rep.left_holds and rep.right_holds and rep.invariant


def test_unit_dirac_sandwich(plane):
    rep = sandwich_report(cyclic_rotation_group(plane, 4), dirac(make_point(plane, [1.0, 0.0])))
    assert rep.var_w == pytest.approx(0.0, abs=1e-12)
    assert rep.var_mu == 0.0
    assert rep.var_l2 == pytest.approx(1.0)


def test_sandwich_on_sphere_skips_left_inequality(sphere2):
    m = dirac(spherical_point(sphere2, 0.5, 0.0))
    rep = sandwich_report(antipodal_group(sphere2), m)
    assert rep.left_holds is None
    assert rep.right_holds


def test_random_sandwich_holds(plane):
    from w2geo.experiments import _disk_measure

    G = cyclic_rotation_group(plane, 4)
    for seed in range(3):
        rep = sandwich_report(G, _disk_measure(plane, np.random.default_rng(seed)))
        assert rep.left_holds and rep.right_holds
