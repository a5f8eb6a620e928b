import json

import numpy as np
import pytest

from w2geo.config import W2Config
from w2geo.geometry import Space, make_point
from w2geo.measure import make_measure, uniform


# ---------------------------------------------------------------------------
# Spaces
# ---------------------------------------------------------------------------

@pytest.fixture
def plane():
    return Space.euclidean(2)


@pytest.fixture
def line():
    return Space.euclidean(1)


@pytest.fixture
def sphere2():
    """Unit 2-sphere (circumference 2π)."""
    return Space.sphere(2)


@pytest.fixture
def short_sphere():
    """2-sphere of circumference 2, so the poles are at distance 1."""
    return Space.sphere(2, circumference=2.0)


@pytest.fixture
def h2():
    return Space.hyperbolic(2)


@pytest.fixture
def cylinder():
    return Space.flat_cylinder(1.0)


@pytest.fixture
def balloon():
    return Space.balloon_string(1.0, 1.0)


# ---------------------------------------------------------------------------
# Config and randomness
# ---------------------------------------------------------------------------

@pytest.fixture
def cfg():
    """Default W2Config with a fixed seed."""
    return W2Config(seed=7)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# ---------------------------------------------------------------------------
# Small measures
# ---------------------------------------------------------------------------

@pytest.fixture
def segment(plane):
    """½[δ(0,0) + δ(1,0)] in the plane."""
    return uniform([make_point(plane, [0.0, 0.0]), make_point(plane, [1.0, 0.0])])


@pytest.fixture
def shifted_segment(plane):
    """The segment moved up by one."""
    return uniform([make_point(plane, [0.0, 1.0]), make_point(plane, [1.0, 1.0])])


@pytest.fixture
def weighted_plane_measure(plane):
    return make_measure(
        [make_point(plane, [0.0, 0.0]), make_point(plane, [2.0, 0.0]), make_point(plane, [0.0, 3.0])],
        [0.5, 0.25, 0.25],
    )


# ---------------------------------------------------------------------------
# JSON input files
# ---------------------------------------------------------------------------

def write_json(path, payload):
    path.write_text(json.dumps(payload))
    return path


@pytest.fixture
def plane_space_dict():
    return {"kind": "euclidean", "dim": 2, "params": {}}


@pytest.fixture
def mu_file(tmp_path, plane_space_dict):
    return write_json(
        tmp_path / "mu.json",
        {"space": plane_space_dict, "atoms": [[0.0, 0.0], [1.0, 0.0]], "weights": [0.5, 0.5]},
    )


@pytest.fixture
def nu_file(tmp_path, plane_space_dict):
    return write_json(
        tmp_path / "nu.json",
        {"space": plane_space_dict, "atoms": [[0.0, 1.0], [1.0, 1.0]], "weights": [0.5, 0.5]},
    )
