import json
import math

import numpy as np
import pytest

from w2geo.errors import IsometryError, MalformedInputError, MeasureError
from w2geo.geometry import Space, north_pole, rotation, string_point
from w2geo.measure import make_ensemble, make_measure, measures_close
from w2geo.schema import (
    coupling_to_dict,
    ensemble_from_dict,
    ensemble_to_dict,
    frechet_result_to_dict,
    group_from_dict,
    group_to_dict,
    isometry_from_dict,
    isometry_to_dict,
    load_json,
    measure_from_dict,
    measure_to_dict,
    parse_space_spec,
    point_from_dict,
    point_to_dict,
    space_from_dict,
    space_to_dict,
    to_jsonable,
)
from w2geo.symmetry import cyclic_rotation_group
from w2geo.transport import solve_ot


# ---------------------------------------------------------------------------
# Spaces
# ---------------------------------------------------------------------------

def test_space_to_dict(short_sphere):
    assert space_to_dict(short_sphere) == {"kind": "sphere", "dim": 2, "params": {"circumference": 2.0}}


@pytest.mark.parametrize(
    "kind, expected",
    [
        ("FlatCylinder", "flat_cylinder"),
        ("cylinder", "flat_cylinder"),
        ("BalloonString", "balloon_string"),
        ("Hyperbolic", "hyperbolic"),
    ],
)
def test_kind_aliases(kind, expected):
    assert space_from_dict({"kind": kind}).kind == expected


def test_default_parameters_filled_in():
    assert space_from_dict({"kind": "sphere"}).circumference == pytest.approx(2 * math.pi)
    balloon = space_from_dict({"kind": "balloon_string"})
    assert (balloon.circumference, balloon.string_length) == (1.0, 1.0)


def test_unknown_kind():
    with pytest.raises(MalformedInputError, match="Unknown space kind"):
        space_from_dict({"kind": "torus"})


def test_missing_kind():
    with pytest.raises(MalformedInputError, match="missing required key 'kind'"):
        space_from_dict({"dim": 2})


def test_bad_parameter_name():
    with pytest.raises(MalformedInputError):
        space_from_dict({"kind": "euclidean", "params": {"width": 1.0}})


def test_parse_space_spec():
    space = parse_space_spec("sphere:dim=2,circumference=2")
    assert space == Space.sphere(2, circumference=2.0)
    assert parse_space_spec("hyperbolic:dim=3") == Space.hyperbolic(3)
    assert parse_space_spec("euclidean") == Space.euclidean(2)


def test_parse_space_spec_bad_item():
    with pytest.raises(MalformedInputError, match="key=value"):
        parse_space_spec("sphere:circumference")


# ---------------------------------------------------------------------------
# Points and measures
# ---------------------------------------------------------------------------

def test_point_round_trip_balloon(balloon):
    p = string_point(balloon, 0.25)
    d = point_to_dict(p)
    assert d == {"chart": [0.25], "tag": "string"}
    assert point_from_dict(d, balloon).chart.tolist() == [0.25]


def test_point_from_bare_list_infers_balloon_tag(balloon):
    assert point_from_dict([0.4], balloon).tag == "string"
    assert point_from_dict([0.0, 0.0, 1.0], balloon).tag == "sphere"


def test_point_chart_must_be_numeric(plane):
    with pytest.raises(MalformedInputError, match="numeric"):
        point_from_dict({"chart": ["a", "b"]}, plane)


def test_measure_from_dict(plane_space_dict):
    m = measure_from_dict(
        {"space": plane_space_dict, "atoms": [[1.0, 0.0], [0.0, 0.0]], "weights": [0.25, 0.75]}
    )
    assert [p.chart.tolist() for p in m.atoms] == [[0.0, 0.0], [1.0, 0.0]]
    assert m.weights.tolist() == [0.75, 0.25]


def test_measure_default_uniform_weights(plane_space_dict):
    m = measure_from_dict({"space": plane_space_dict, "atoms": [[0, 0], [1, 0], [2, 0]]})
    assert m.weights.tolist() == pytest.approx([1 / 3] * 3)


def test_measure_uses_fallback_space(line):
    m = measure_from_dict({"atoms": [[0.0], [1.0]]}, space=line)
    assert m.space == line


def test_measure_needs_space():
    with pytest.raises(MalformedInputError, match="'space'"):
        measure_from_dict({"atoms": [[0.0]]})


def test_measure_unnormalized_weights(plane_space_dict):
    d = {"space": plane_space_dict, "atoms": [[0, 0], [1, 0]], "weights": [1.0, 1.0]}
    with pytest.raises(MeasureError):
        measure_from_dict(d)
    assert measure_from_dict(d, renormalize=True).weights.tolist() == [0.5, 0.5]


def test_measure_tag_count_mismatch(balloon):
    d = {"space": space_to_dict(balloon), "atoms": [[0.2], [0.3]], "tags": ["string"]}
    with pytest.raises(MalformedInputError, match="tags"):
        measure_from_dict(d)


def test_balloon_measure_round_trip(balloon):
    m = make_measure([string_point(balloon, 0.3), north_pole(balloon)])
    d = measure_to_dict(m)
    assert d["tags"] == ["sphere", "string"]
    back = measure_from_dict(json.loads(json.dumps(d)))
    assert measures_close(back, m)


def test_ensemble_round_trip(segment, shifted_segment):
    ens = make_ensemble([segment, shifted_segment], [0.25, 0.75])
    back = ensemble_from_dict(json.loads(json.dumps(ensemble_to_dict(ens))))
    assert back.weights.tolist() == [0.25, 0.75]
    assert measures_close(back.measures[1], shifted_segment)


def test_ensemble_needs_measures(plane_space_dict):
    with pytest.raises(MalformedInputError):
        ensemble_from_dict({"space": plane_space_dict, "measures": []})


# ---------------------------------------------------------------------------
# Isometries and groups
# ---------------------------------------------------------------------------

def test_isometry_round_trip(plane):
    g = rotation(plane, 0.4)
    back = isometry_from_dict(isometry_to_dict(g), plane)
    assert np.allclose(back.matrix, g.matrix)


def test_isometry_bad_matrix(plane):
    with pytest.raises(IsometryError):
        isometry_from_dict({"matrix": [[1.0, 1.0], [0.0, 1.0]]}, plane)


def test_isometry_matrix_must_be_2d(plane):
    with pytest.raises(MalformedInputError):
        isometry_from_dict({"matrix": [1.0, 0.0]}, plane)


def test_group_from_generators(plane_space_dict):
    quarter = [[0.0, -1.0], [1.0, 0.0]]
    G = group_from_dict({"space": plane_space_dict, "generators": [{"matrix": quarter}]})
    assert len(G) == 4


def test_group_closure_bound(plane_space_dict):
    c, s = math.cos(1.0), math.sin(1.0)
    d = {"space": plane_space_dict, "generators": [{"matrix": [[c, -s], [s, c]]}], "max_order": 8}
    with pytest.raises(IsometryError, match="exceeds 8"):
        group_from_dict(d)


def test_group_to_dict(plane):
    d = group_to_dict(cyclic_rotation_group(plane, 3))
    assert d["order"] == 3
    assert len(d["elements"]) == 3


# ---------------------------------------------------------------------------
# Results and files
# ---------------------------------------------------------------------------

def test_coupling_to_dict(segment, shifted_segment):
    d = coupling_to_dict(solve_ot(segment, shifted_segment))
    assert d["cost"] == pytest.approx(1.0)
    assert d["distance"] == pytest.approx(1.0)
    assert sum(e["mass"] for e in d["entries"]) == pytest.approx(1.0)
    assert "entries" not in coupling_to_dict(solve_ot(segment, shifted_segment), include_plan=False)


def test_frechet_result_to_dict(segment):
    from w2geo.frechet import frechet_mean

    d = frechet_result_to_dict(frechet_mean(segment))
    assert d["point"]["chart"] == pytest.approx([0.5, 0.0])
    assert d["value"] == pytest.approx(0.25)
    assert d["method"] == "gradient"
    assert d["converged"] is True
    assert d["alternatives"] == []


def test_to_jsonable_handles_numpy_and_nan():
    out = to_jsonable({"a": np.float64(1.5), "b": np.array([1, 2]), "c": math.nan, "d": np.bool_(True)})
    assert out == {"a": 1.5, "b": [1, 2], "c": None, "d": True}
    json.dumps(out)


def test_load_json_malformed(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(MalformedInputError, match="Invalid JSON"):
        load_json(bad)
