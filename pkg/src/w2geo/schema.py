"""w2geo.schema — JSON (de)serialization of spaces, points, measures and results.

The wire format is documented in ``docs/reference/schema.md``. Readers are
strict: unknown space kinds, missing keys and malformed arrays raise
:class:`~w2geo.errors.MalformedInputError` naming the offending value.
"""

from __future__ import annotations

__all__ = [
    "space_to_dict",
    "space_from_dict",
    "parse_space_spec",
    "point_to_dict",
    "point_from_dict",
    "measure_to_dict",
    "measure_from_dict",
    "ensemble_to_dict",
    "ensemble_from_dict",
    "isometry_to_dict",
    "isometry_from_dict",
    "group_to_dict",
    "group_from_dict",
    "coupling_to_dict",
    "frechet_result_to_dict",
    "barycenter_result_to_dict",
    "load_json",
    "to_jsonable",
]

import json
import math
from pathlib import Path
from typing import Any

import numpy as np

from w2geo.config import DEFAULT_TOLERANCES, Tolerances
from w2geo.errors import MalformedInputError
from w2geo.frechet import BarycenterResult
from w2geo.geometry import SPACE_KINDS, Isometry, Point, Space, make_point
from w2geo.measure import DiscreteMeasure, MeasureEnsemble, make_ensemble, make_measure
from w2geo.symmetry import DEFAULT_MAX_ORDER, IsometryGroup, generate_group
from w2geo.transport import Coupling
from w2geo.wbarycenter import EnsembleBarycenterResult

# CamelCase names are accepted on input; output always uses the snake_case kind.
_KIND_ALIASES = {
    "euclidean": "euclidean",
    "sphere": "sphere",
    "hyperbolic": "hyperbolic",
    "flatcylinder": "flat_cylinder",
    "flat_cylinder": "flat_cylinder",
    "cylinder": "flat_cylinder",
    "balloonstring": "balloon_string",
    "balloon_string": "balloon_string",
    "balloon": "balloon_string",
}

_DEFAULT_PARAMS: dict[str, dict[str, float]] = {
    "sphere": {"circumference": 2 * math.pi},
    "flat_cylinder": {"circumference": 1.0},
    "balloon_string": {"circumference": 1.0, "string_length": 1.0},
}


def _require(d: Any, key: str, what: str) -> Any:
    if not isinstance(d, dict):
        raise MalformedInputError(f"{what} must be a JSON object, got {type(d).__name__}")
    if key not in d:
        raise MalformedInputError(f"{what} is missing required key {key!r}")
    return d[key]


def _float_array(value: Any, what: str, ndim: int = 1) -> np.ndarray:
    try:
        arr = np.asarray(value, dtype=float)
    except (TypeError, ValueError) as exc:
        raise MalformedInputError(f"{what} must be numeric, got {value!r}") from exc
    if arr.ndim != ndim:
        raise MalformedInputError(f"{what} must be a {ndim}-d array, got shape {arr.shape}")
    return arr


# ---------------------------------------------------------------------------
# Space
# ---------------------------------------------------------------------------


def _kind(name: Any) -> str:
    key = str(name).strip().lower()
    if key not in _KIND_ALIASES:
        raise MalformedInputError(f"Unknown space kind {name!r}. Known kinds: {list(SPACE_KINDS)}")
    return _KIND_ALIASES[key]


def space_to_dict(space: Space) -> dict:
    return {"kind": space.kind, "dim": space.dim, "params": dict(space.params)}


def space_from_dict(d: dict) -> Space:
    kind = _kind(_require(d, "kind", "space"))
    params = d.get("params") or {}
    if not isinstance(params, dict):
        raise MalformedInputError(f"space params must be an object, got {params!r}")
    dim = int(d.get("dim", 2))
    values = {**_DEFAULT_PARAMS.get(kind, {}), **{k: float(v) for k, v in params.items()}}
    try:
        return Space(kind, dim, **values)
    except TypeError as exc:
        raise MalformedInputError(f"bad parameters for {kind}: {params!r}") from exc


def parse_space_spec(spec: str) -> Space:
    """Parse the CLI form ``kind[:key=value,...]``.

    >>> parse_space_spec("sphere:dim=2,circumference=2")
    Space(kind='sphere', dim=2, circumference=2.0, radius=None, string_length=None)
    """
    kind, _, rest = spec.partition(":")
    d: dict[str, Any] = {"kind": kind, "params": {}}
    for item in filter(None, (part.strip() for part in rest.split(","))):
        key, sep, value = item.partition("=")
        if not sep:
            raise MalformedInputError(f"space parameter must be key=value, got {item!r}")
        if key.strip() == "dim":
            d["dim"] = int(value)
        else:
            d["params"][key.strip()] = float(value)
    return space_from_dict(d)


# ---------------------------------------------------------------------------
# Points and measures
# ---------------------------------------------------------------------------


def _infer_tag(space: Space, chart: np.ndarray, tag: Any) -> str | None:
    if space.kind != "balloon_string":
        return None
    if tag is not None:
        return str(tag)
    return "string" if chart.shape == (1,) else "sphere"


def point_to_dict(p: Point) -> dict:
    d: dict[str, Any] = {"chart": p.chart.tolist()}
    if p.tag is not None:
        d["tag"] = p.tag
    return d


def point_from_dict(d: dict | list, space: Space) -> Point:
    """Accepts ``{"chart": [...], "tag": ...}`` or a bare coordinate list."""
    if isinstance(d, dict):
        chart = _float_array(_require(d, "chart", "point"), "point chart")
        tag = d.get("tag")
    else:
        chart = _float_array(d, "point chart")
        tag = None
    return make_point(space, chart, _infer_tag(space, chart, tag))


def measure_to_dict(m: DiscreteMeasure) -> dict:
    d: dict[str, Any] = {
        "space": space_to_dict(m.space),
        "atoms": [p.chart.tolist() for p in m.atoms],
        "weights": m.weights.tolist(),
    }
    if m.space.kind == "balloon_string":
        d["tags"] = [p.tag for p in m.atoms]
    return d


def measure_from_dict(
    d: dict,
    space: Space | None = None,
    renormalize: bool = False,
    tol: Tolerances = DEFAULT_TOLERANCES,
) -> DiscreteMeasure:
    """Read a measure; *space* overrides a missing ``space`` key."""
    if "space" in d:
        space = space_from_dict(d["space"])
    elif space is None:
        raise MalformedInputError("measure is missing required key 'space'")
    atoms_raw = _require(d, "atoms", "measure")
    if not isinstance(atoms_raw, list):
        raise MalformedInputError(f"measure atoms must be a list, got {atoms_raw!r}")
    tags = d.get("tags") or [None] * len(atoms_raw)
    if len(tags) != len(atoms_raw):
        raise MalformedInputError(f"{len(tags)} tags for {len(atoms_raw)} atoms")
    atoms = [
        point_from_dict({"chart": a, "tag": t} if not isinstance(a, dict) else a, space)
        for a, t in zip(atoms_raw, tags)
    ]
    weights = d.get("weights")
    if weights is not None:
        weights = _float_array(weights, "measure weights")
    return make_measure(atoms, weights, renormalize=renormalize, tol=tol)


def ensemble_to_dict(ens: MeasureEnsemble) -> dict:
    return {
        "space": space_to_dict(ens.space),
        "weights": ens.weights.tolist(),
        "measures": [measure_to_dict(m) for m in ens.measures],
    }


def ensemble_from_dict(
    d: dict, space: Space | None = None, tol: Tolerances = DEFAULT_TOLERANCES
) -> MeasureEnsemble:
    if "space" in d:
        space = space_from_dict(d["space"])
    raw = _require(d, "measures", "ensemble")
    if not isinstance(raw, list) or not raw:
        raise MalformedInputError("ensemble needs a non-empty list of measures")
    measures = [measure_from_dict(m, space, tol=tol) for m in raw]
    weights = d.get("weights")
    if weights is not None:
        weights = _float_array(weights, "ensemble weights")
    return make_ensemble(measures, weights, tol=tol)


# ---------------------------------------------------------------------------
# Isometries and groups
# ---------------------------------------------------------------------------


def isometry_to_dict(g: Isometry) -> dict:
    return {"matrix": g.matrix.tolist(), "translation": g.translation.tolist()}


def isometry_from_dict(d: dict, space: Space) -> Isometry:
    matrix = _float_array(_require(d, "matrix", "isometry"), "isometry matrix", ndim=2)
    translation = d.get("translation")
    if translation is not None:
        translation = _float_array(translation, "isometry translation")
    return Isometry(space, matrix, translation)


def group_to_dict(G: IsometryGroup) -> dict:
    return {
        "space": space_to_dict(G.space),
        "order": len(G),
        "elements": [isometry_to_dict(g) for g in G.elements],
    }


def group_from_dict(d: dict, space: Space | None = None) -> IsometryGroup:
    """Generators plus a closure bound: ``{"generators": [...], "max_order": 64}``."""
    if "space" in d:
        space = space_from_dict(d["space"])
    if space is None:
        raise MalformedInputError("group is missing required key 'space'")
    raw = d.get("generators", [])
    if not isinstance(raw, list):
        raise MalformedInputError(f"group generators must be a list, got {raw!r}")
    generators = [isometry_from_dict(g, space) for g in raw]
    return generate_group(generators, space, max_order=int(d.get("max_order", DEFAULT_MAX_ORDER)))


# ---------------------------------------------------------------------------
# Results
# ---------------------------------------------------------------------------


def coupling_to_dict(c: Coupling, include_plan: bool = True) -> dict:
    d: dict[str, Any] = {
        "cost": float(c.cost),
        "distance": math.sqrt(max(float(c.cost), 0.0)),
    }
    if include_plan:
        d["entries"] = [{"source": i, "target": j, "mass": m} for i, j, m in c.entries]
    return d


def frechet_result_to_dict(result: BarycenterResult) -> dict:
    return {
        "point": point_to_dict(result.point),
        "value": float(result.value),
        "method": result.method,
        "iterations": int(result.iterations),
        "residual": result.residual,
        "multiple": bool(result.multiple),
        "converged": bool(result.converged),
        "alternatives": [point_to_dict(p) for p in result.alternatives],
    }


def barycenter_result_to_dict(result: EnsembleBarycenterResult) -> dict:
    return {
        "measure": measure_to_dict(result.measure),
        "objective": float(result.objective),
        "iterations": int(result.iterations),
        "residual": to_jsonable(result.residual),
        "converged": bool(result.converged),
        "stop_reason": result.stop_reason,
        "warnings": list(result.warnings),
    }


# ---------------------------------------------------------------------------
# Files
# ---------------------------------------------------------------------------


def to_jsonable(value: Any) -> Any:
    """numpy scalars/arrays to Python, NaN/inf to None."""
    if isinstance(value, dict):
        return {str(k): to_jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return to_jsonable(value.tolist())
    if isinstance(value, (np.bool_, bool)):
        return bool(value)
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        return value if math.isfinite(value) else None
    return value


def load_json(path: str | Path) -> Any:
    """Read a JSON document; malformed JSON raises MalformedInputError."""
    path = Path(path)
    try:
        with path.open() as f:
            return json.load(f)
    except json.JSONDecodeError as exc:
        raise MalformedInputError(f"Invalid JSON in {path}: {exc}") from exc
