"""w2geo.geometry — model metric spaces with closed-form geodesics.

Five model geometries are supported, each with closed-form distance,
exponential and logarithm maps:

``euclidean``
    ℝⁿ, charts are plain coordinates.
``sphere``
    the round sphere Sⁿ of a given circumference, stored as embedding vectors
    in ℝⁿ⁺¹ of norm ``circumference / 2π``. Angles are never primary state.
``hyperbolic``
    Hⁿ in the hyperboloid model, ⟨x, x⟩_L = −ρ² with x₀ > 0; sectional
    curvature −1/ρ². Points are renormalized after every arithmetic step.
``flat_cylinder``
    ℝ × S¹ with the flat metric, charts ``(axial, angle)`` with the angle
    reduced into ``[0, c)``.
``balloon_string``
    a 2-sphere (the balloon) with a segment (the string) glued at its south
    pole. This is a geodesic metric space, not a manifold. Points carry a
    ``tag``: ``"sphere"`` with a 3-vector chart or ``"string"`` with the
    distance ``s`` from the south pole.

All values are immutable and every operation is a pure function. The numeric
kernels operate on *packed* arrays (one row per point) so distance matrices
and Karcher updates stay vectorized; the balloon packs a point as
``(u₀, u₁, u₂, s)`` with ``u`` the south pole for string points.

Cut-locus handling
------------------
:func:`log` and :func:`geodesic_point` raise :class:`~w2geo.errors.CutLocusError`
when the minimizing geodesic is not unique. Passing ``tie_break=True`` selects
the geodesic whose initial velocity is lexicographically largest in chart
coordinates instead.
"""

from __future__ import annotations

__all__ = [
    "SPACE_KINDS",
    "Space",
    "Point",
    "TangentVector",
    "Isometry",
    "make_point",
    "sphere_point",
    "spherical_point",
    "hyperbolic_point",
    "north_pole",
    "south_pole",
    "gluing_point",
    "is_gluing_point",
    "string_point",
    "tangent",
    "zero_vector",
    "scale",
    "inner",
    "norm",
    "distance",
    "pairwise_distances",
    "exp",
    "log",
    "log_many",
    "geodesic_point",
    "apply_isometry",
    "map_points",
    "identity",
    "rotation",
    "reflection",
    "point_reflection",
    "translation",
    "hyperbolic_boost",
    "cylinder_isometry",
    "compose",
    "inverse",
    "isometries_close",
    "pack",
    "unpack",
    "point_sort_key",
]

import math
from dataclasses import dataclass
from typing import Callable, Literal, Sequence

import numpy as np

from w2geo.config import DEFAULT_TOLERANCES, Tolerances
from w2geo.errors import (
    BranchAmbiguityError,
    CutLocusError,
    IsometryError,
    MalformedInputError,
    PreconditionError,
    SpaceMismatchError,
)

SpaceKind = Literal["euclidean", "sphere", "hyperbolic", "flat_cylinder", "balloon_string"]
PointTag = Literal["sphere", "string"]

SPACE_KINDS: tuple[str, ...] = (
    "euclidean",
    "sphere",
    "hyperbolic",
    "flat_cylinder",
    "balloon_string",
)

_TAG_ORDER = {None: 0, "sphere": 0, "string": 1}


# ---------------------------------------------------------------------------
# Domain types
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Space:
    """Descriptor of a model geometry (kind + shape parameters)."""

    kind: SpaceKind
    dim: int = 2
    circumference: float | None = None  # sphere, flat_cylinder, balloon_string
    radius: float | None = None  # hyperbolic curvature radius; curvature is -1/radius**2
    string_length: float | None = None  # balloon_string

    def __post_init__(self) -> None:
        if self.kind not in SPACE_KINDS:
            raise MalformedInputError(
                f"Unknown space kind {self.kind!r}. Known kinds: {list(SPACE_KINDS)}"
            )
        if not isinstance(self.dim, (int, np.integer)) or self.dim < 1:
            raise MalformedInputError(f"dim must be a positive integer, got {self.dim!r}")
        if self.kind == "hyperbolic" and self.radius is None:
            object.__setattr__(self, "radius", 1.0)
        if self.kind in ("flat_cylinder", "balloon_string") and self.dim != 2:
            raise MalformedInputError(f"{self.kind} has dim 2, got {self.dim!r}")
        required = {
            "euclidean": (),
            "sphere": ("circumference",),
            "hyperbolic": ("radius",),
            "flat_cylinder": ("circumference",),
            "balloon_string": ("circumference", "string_length"),
        }[self.kind]
        for name in required:
            value = getattr(self, name)
            if value is None or not float(value) > 0 or not math.isfinite(float(value)):
                raise MalformedInputError(
                    f"{self.kind} needs a positive {name}, got {value!r}"
                )
            object.__setattr__(self, name, float(value))
        for name in ("circumference", "radius", "string_length"):
            if name not in required and getattr(self, name) is not None:
                raise MalformedInputError(f"{self.kind} takes no {name} parameter")

    # -- constructors -------------------------------------------------------

    @classmethod
    def euclidean(cls, dim: int = 2) -> "Space":
        return cls("euclidean", dim)

    @classmethod
    def sphere(cls, dim: int = 2, circumference: float = 2 * math.pi) -> "Space":
        return cls("sphere", dim, circumference=circumference)

    @classmethod
    def hyperbolic(cls, dim: int = 2, radius: float = 1.0) -> "Space":
        return cls("hyperbolic", dim, radius=radius)

    @classmethod
    def flat_cylinder(cls, circumference: float = 1.0) -> "Space":
        return cls("flat_cylinder", 2, circumference=circumference)

    @classmethod
    def balloon_string(cls, circumference: float = 1.0, string_length: float = 1.0) -> "Space":
        return cls("balloon_string", 2, circumference=circumference, string_length=string_length)

    # -- derived properties -------------------------------------------------

    @property
    def params(self) -> dict[str, float]:
        """Shape parameters as a plain dict (the JSON ``params`` object)."""
        names = ("circumference", "radius", "string_length")
        return {n: getattr(self, n) for n in names if getattr(self, n) is not None}

    @property
    def sphere_radius(self) -> float:
        """Embedding radius ``circumference / 2π`` of the (balloon) sphere."""
        if self.kind not in ("sphere", "balloon_string"):
            raise PreconditionError(f"{self.kind} has no sphere component")
        return self.circumference / (2 * math.pi)  # type: ignore[operator]

    @property
    def is_npc(self) -> bool:
        """True for the simply connected, nonpositively curved models."""
        return self.kind in ("euclidean", "hyperbolic")

    @property
    def chart_dim(self) -> int:
        """Length of a chart vector (the balloon's sphere chart for balloon_string)."""
        if self.kind in ("sphere", "hyperbolic"):
            return self.dim + 1
        if self.kind == "balloon_string":
            return 3
        return self.dim

    def __str__(self) -> str:
        params = ", ".join(f"{k}={v:g}" for k, v in self.params.items())
        return f"{self.kind}(dim={self.dim}{', ' + params if params else ''})"


@dataclass(frozen=True, eq=False)
class Point:
    """A point of a Space given by its chart coordinates."""

    space: Space
    chart: np.ndarray
    tag: PointTag | None = None

    def __post_init__(self) -> None:
        chart = np.array(self.chart, dtype=float).reshape(-1)
        chart.setflags(write=False)
        object.__setattr__(self, "chart", chart)
        if not np.all(np.isfinite(chart)):
            raise MalformedInputError(f"Point chart must be finite, got {chart!r}")
        _model(self.space).validate_point(self.space, chart, self.tag, DEFAULT_TOLERANCES)

    def __repr__(self) -> str:
        tag = f", tag={self.tag!r}" if self.tag else ""
        return f"Point({self.space.kind}, chart={np.array2string(self.chart, precision=6)}{tag})"


@dataclass(frozen=True, eq=False)
class TangentVector:
    """A tangent vector anchored at ``base``.

    For spheres and hyperbolic spaces ``components`` live in the ambient
    embedding and satisfy the tangency constraint. On the balloon ``tag``
    names the component the direction points into; string-tagged vectors are
    ``(ds,)`` or ``(ds, m₀, m₁, m₂)`` where ``m`` is the unit meridian
    direction followed past the gluing point.
    """

    base: Point
    components: np.ndarray
    tag: PointTag | None = None

    def __post_init__(self) -> None:
        comps = np.array(self.components, dtype=float).reshape(-1)
        comps.setflags(write=False)
        object.__setattr__(self, "components", comps)
        if self.tag is None and self.base.space.kind == "balloon_string":
            object.__setattr__(self, "tag", "string" if self.base.tag == "string" else "sphere")
        _model(self.base.space).validate_tangent(self, DEFAULT_TOLERANCES)

    @property
    def space(self) -> Space:
        return self.base.space


@dataclass(frozen=True, eq=False)
class Isometry:
    """A distance-preserving map, stored as a linear part plus a translation.

    euclidean      x ↦ A x + b, A orthogonal
    sphere         x ↦ Q x, Q orthogonal
    hyperbolic     x ↦ L x, L Lorentz-orthochronous
    flat_cylinder  (z, θ) ↦ (±z + a, ±θ + b mod c); matrix is diag(±1, ±1)
    balloon_string sphere points u ↦ Q u with Q S = S; string points fixed
    """

    space: Space
    matrix: np.ndarray
    translation: np.ndarray | None = None

    def __post_init__(self) -> None:
        matrix = np.array(self.matrix, dtype=float)
        n = self.space.chart_dim
        if matrix.shape != (n, n):
            raise IsometryError(
                f"{self.space.kind} isometry needs a {n}x{n} matrix, got shape {matrix.shape}"
            )
        trans = np.zeros(n) if self.translation is None else np.array(self.translation, dtype=float)
        if trans.shape != (n,):
            raise IsometryError(f"translation must have length {n}, got shape {trans.shape}")
        if self.space.kind == "flat_cylinder":
            trans = trans.copy()
            trans[1] = _wrap_angle(trans[1], self.space.circumference)  # type: ignore[arg-type]
        matrix.setflags(write=False)
        trans.setflags(write=False)
        object.__setattr__(self, "matrix", matrix)
        object.__setattr__(self, "translation", trans)
        _model(self.space).validate_isometry(self, DEFAULT_TOLERANCES)


# ---------------------------------------------------------------------------
# Model registry
# ---------------------------------------------------------------------------


class _Model:
    """Closed-form kernels of one model geometry, on packed arrays."""

    def validate_point(self, space: Space, chart: np.ndarray, tag, tol: Tolerances) -> None:
        if tag is not None:
            raise MalformedInputError(f"{space.kind} points take no tag, got {tag!r}")
        if chart.shape != (space.chart_dim,):
            raise MalformedInputError(
                f"{space.kind} chart must have length {space.chart_dim}, got {chart.shape[0]}"
            )

    def validate_tangent(self, v: TangentVector, tol: Tolerances) -> None:
        space = v.base.space
        if v.components.shape != (space.chart_dim,):
            raise MalformedInputError(
                f"{space.kind} tangent vector must have length {space.chart_dim}"
            )

    def validate_isometry(self, g: Isometry, tol: Tolerances) -> None:
        _check_orthogonal(g.matrix, tol)

    def pack(self, p: Point) -> np.ndarray:
        return p.chart

    def unpack(self, space: Space, row: np.ndarray) -> Point:
        return Point(space, row)

    def dist(self, space: Space, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def log_rows(
        self, space: Space, x: np.ndarray, ys: np.ndarray, tol: Tolerances, tie_break: bool
    ) -> np.ndarray:
        """Logarithms from the packed base ``x`` to every row of ``ys``."""
        raise NotImplementedError

    def exp_vec(self, v: TangentVector, tol: Tolerances) -> Point:
        raise NotImplementedError

    def inner(self, base: Point, u: np.ndarray, v: np.ndarray) -> float:
        return float(u @ v)

    def project_tangent(self, space: Space, x: np.ndarray, v: np.ndarray) -> np.ndarray:
        return v

    def apply(self, g: Isometry, rows: np.ndarray) -> np.ndarray:
        return rows @ g.matrix.T + g.translation

    def compose(self, g: Isometry, h: Isometry) -> Isometry:
        return Isometry(g.space, g.matrix @ h.matrix, g.matrix @ h.translation + g.translation)

    def inverse(self, g: Isometry) -> Isometry:
        inv = g.matrix.T
        return Isometry(g.space, inv, -(inv @ g.translation))


_MODELS: dict[str, _Model] = {}


def _register_model(kind: str) -> Callable[[type[_Model]], type[_Model]]:
    """Decorator registering the kernel class of a space kind."""

    def decorator(cls: type[_Model]) -> type[_Model]:
        _MODELS[kind] = cls()
        return cls

    return decorator


def _model(space: Space) -> _Model:
    return _MODELS[space.kind]


def _check_orthogonal(matrix: np.ndarray, tol: Tolerances) -> None:
    err = np.max(np.abs(matrix.T @ matrix - np.eye(matrix.shape[0])))
    if err > tol.isometry:
        raise IsometryError(f"matrix is not orthogonal (max deviation {err:.3g})")


def _wrap_angle(theta, c: float):
    """Reduce angles into [0, c)."""
    out = np.mod(theta, c)
    return np.where(out >= c, out - c, out) if isinstance(out, np.ndarray) else (0.0 if out >= c else float(out))


def _signed_angle(dtheta, c: float):
    """Reduce angular differences into [-c/2, c/2)."""
    return np.mod(np.asarray(dtheta) + c / 2, c) - c / 2


def _lex_unit_tangent(u: np.ndarray) -> np.ndarray:
    """Lexicographically largest unit vector orthogonal to ``u`` (Euclidean)."""
    unit = u / np.linalg.norm(u)
    for k in range(u.shape[0]):
        e = np.zeros_like(u)
        e[k] = 1.0
        cand = e - (e @ unit) * unit
        n = np.linalg.norm(cand)
        if n > 1e-8:
            return cand / n
    raise PreconditionError("no tangent direction exists")  # pragma: no cover


@_register_model("euclidean")
class _Euclidean(_Model):
    def dist(self, space, a, b):
        return np.linalg.norm(a - b, axis=-1)

    def log_rows(self, space, x, ys, tol, tie_break):
        return ys - x

    def exp_vec(self, v, tol):
        return Point(v.base.space, v.base.chart + v.components)


@_register_model("sphere")
class _Sphere(_Model):
    def validate_point(self, space, chart, tag, tol):
        super().validate_point(space, chart, tag, tol)
        R = space.sphere_radius
        if abs(np.linalg.norm(chart) - R) > tol.chart * max(1.0, R):
            raise MalformedInputError(
                f"sphere point must have norm {R:.12g}, got {np.linalg.norm(chart):.12g}"
            )

    def validate_tangent(self, v, tol):
        super().validate_tangent(v, tol)
        R = v.base.space.sphere_radius
        scale_ = max(1.0, R) * max(1.0, float(np.linalg.norm(v.components)))
        if abs(float(v.base.chart @ v.components)) > 1e3 * tol.chart * scale_:
            raise MalformedInputError("sphere tangent vector is not orthogonal to its base")

    def dist(self, space, a, b):
        R = space.sphere_radius
        return 2 * R * np.arctan2(np.linalg.norm(a - b, axis=-1), np.linalg.norm(a + b, axis=-1))

    def log_rows(self, space, x, ys, tol, tie_break):
        R = space.sphere_radius
        ys = np.atleast_2d(ys)
        d = self.dist(space, x, ys)
        diff = ys - x
        w = diff - np.outer((diff @ x) / R**2, x)
        nw = np.linalg.norm(w, axis=1)
        out = np.zeros_like(ys)
        ok = nw > 0
        out[ok] = w[ok] * (d[ok] / nw[ok])[:, None]
        antipodal = np.linalg.norm(ys + x, axis=1) <= 2 * R * tol.cut_locus
        if np.any(antipodal):
            if not tie_break:
                idx = int(np.flatnonzero(antipodal)[0])
                raise CutLocusError(
                    "points are antipodal on the sphere; the minimizing geodesic is not unique",
                    pair=(x, ys[idx]),
                )
            out[antipodal] = _lex_unit_tangent(x) * (math.pi * R)
        return out

    def exp_vec(self, v, tol):
        space = v.base.space
        return Point(space, _sphere_exp(v.base.chart, v.components, space.sphere_radius))

    def project_tangent(self, space, x, v):
        return v - (x @ v) / space.sphere_radius**2 * x

    def apply(self, g, rows):
        out = rows @ g.matrix.T
        R = g.space.sphere_radius
        return out * (R / np.linalg.norm(out, axis=-1, keepdims=True))

    def validate_isometry(self, g, tol):
        _check_orthogonal(g.matrix, tol)
        if np.any(g.translation != 0):
            raise IsometryError("sphere isometries have no translation part")


def _sphere_exp(x: np.ndarray, v: np.ndarray, R: float) -> np.ndarray:
    n = float(np.linalg.norm(v))
    if n == 0.0:
        return x.copy()
    theta = n / R
    y = math.cos(theta) * x + (R * math.sin(theta) / n) * v
    return y * (R / np.linalg.norm(y))


def _minkowski(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return np.sum(a[..., 1:] * b[..., 1:], axis=-1) - a[..., 0] * b[..., 0]


def _hyperboloid_lift(spatial: np.ndarray, rho: float) -> np.ndarray:
    spatial = np.asarray(spatial, dtype=float)
    x0 = np.sqrt(rho**2 + np.sum(spatial**2, axis=-1, keepdims=True))
    return np.concatenate([x0, spatial], axis=-1)


@_register_model("hyperbolic")
class _Hyperbolic(_Model):
    def validate_point(self, space, chart, tag, tol):
        super().validate_point(space, chart, tag, tol)
        rho = space.radius
        q = float(_minkowski(chart, chart))
        if chart[0] <= 0 or abs(q + rho**2) > tol.chart * max(1.0, chart[0] ** 2):
            raise MalformedInputError(
                f"hyperbolic point must satisfy <x,x>_L = {-rho**2:g} with x0 > 0"
            )

    def validate_tangent(self, v, tol):
        super().validate_tangent(v, tol)
        x = v.base.chart
        scale_ = max(1.0, float(x[0])) * max(1.0, float(np.linalg.norm(v.components)))
        if abs(float(_minkowski(x, v.components))) > 1e3 * tol.chart * scale_:
            raise MalformedInputError("hyperbolic tangent vector violates <x, v>_L = 0")

    def dist(self, space, a, b):
        rho = space.radius
        diff = a - b
        q = np.maximum(_minkowski(diff, diff), 0.0)
        return 2 * rho * np.arcsinh(np.sqrt(q) / (2 * rho))

    def log_rows(self, space, x, ys, tol, tie_break):
        rho = space.radius
        ys = np.atleast_2d(ys)
        d = self.dist(space, x, ys)
        diff = ys - x
        w = diff + np.outer(_minkowski(diff, x[None, :]) / rho**2, x)
        nw = np.sqrt(np.maximum(_minkowski(w, w), 0.0))
        out = np.zeros_like(ys)
        ok = nw > 0
        out[ok] = w[ok] * (d[ok] / nw[ok])[:, None]
        return out

    def exp_vec(self, v, tol):
        space = v.base.space
        rho = space.radius
        x = v.base.chart
        n = math.sqrt(max(float(_minkowski(v.components, v.components)), 0.0))
        if n == 0.0:
            return v.base
        y = math.cosh(n / rho) * x + (rho * math.sinh(n / rho) / n) * v.components
        return Point(space, _hyperboloid_lift(y[1:], rho))

    def inner(self, base, u, v):
        return float(_minkowski(u, v))

    def project_tangent(self, space, x, v):
        return v + _minkowski(x, v) / space.radius**2 * x

    def apply(self, g, rows):
        out = rows @ g.matrix.T
        return _hyperboloid_lift(out[..., 1:], g.space.radius)

    def validate_isometry(self, g, tol):
        n = g.matrix.shape[0]
        J = np.eye(n)
        J[0, 0] = -1.0
        err = np.max(np.abs(g.matrix.T @ J @ g.matrix - J)) / max(1.0, float(np.max(np.abs(g.matrix))) ** 2)
        if err > tol.isometry or g.matrix[0, 0] < 1.0 - tol.isometry:
            raise IsometryError(f"matrix is not Lorentz-orthochronous (deviation {err:.3g})")
        if np.any(g.translation != 0):
            raise IsometryError("hyperbolic isometries have no translation part")

    def inverse(self, g):
        n = g.matrix.shape[0]
        J = np.eye(n)
        J[0, 0] = -1.0
        return Isometry(g.space, J @ g.matrix.T @ J)


@_register_model("flat_cylinder")
class _FlatCylinder(_Model):
    def validate_point(self, space, chart, tag, tol):
        super().validate_point(space, chart, tag, tol)
        if not 0.0 <= chart[1] < space.circumference:
            raise MalformedInputError(
                f"cylinder angle must lie in [0, {space.circumference:g}), got {chart[1]!r}"
            )

    def dist(self, space, a, b):
        dz = a[..., 0] - b[..., 0]
        dt = _signed_angle(a[..., 1] - b[..., 1], space.circumference)
        return np.hypot(dz, dt)

    def log_rows(self, space, x, ys, tol, tie_break):
        c = space.circumference
        ys = np.atleast_2d(ys)
        out = np.empty_like(ys)
        out[:, 0] = ys[:, 0] - x[0]
        dt = _signed_angle(ys[:, 1] - x[1], c)
        tied = np.abs(np.abs(dt) - c / 2) <= tol.cut_locus * c
        if np.any(tied):
            if not tie_break:
                idx = int(np.flatnonzero(tied)[0])
                raise CutLocusError(
                    "angular separation is half the circumference; both windings are minimal",
                    pair=(x, ys[idx]),
                )
            dt = np.where(tied, c / 2, dt)
        out[:, 1] = dt
        return out

    def exp_vec(self, v, tol):
        space = v.base.space
        z, theta = v.base.chart
        return Point(space, [z + v.components[0], _wrap_angle(theta + v.components[1], space.circumference)])

    def apply(self, g, rows):
        out = rows * np.diag(g.matrix) + g.translation
        out[..., 1] = _wrap_angle(out[..., 1], g.space.circumference)
        return out

    def validate_isometry(self, g, tol):
        diag = np.diag(g.matrix)
        off = g.matrix - np.diag(diag)
        if np.max(np.abs(off)) > tol.isometry or np.max(np.abs(np.abs(diag) - 1.0)) > tol.isometry:
            raise IsometryError("cylinder isometry matrix must be diag(+-1, +-1)")

    def compose(self, g, h):
        return Isometry(g.space, g.matrix @ h.matrix, np.diag(g.matrix) * h.translation + g.translation)

    def inverse(self, g):
        return Isometry(g.space, g.matrix, -np.diag(g.matrix) * g.translation)


@_register_model("balloon_string")
class _BalloonString(_Model):
    """Sphere of radius R with a segment of length L glued at the south pole."""

    def validate_point(self, space, chart, tag, tol):
        if tag == "string":
            if chart.shape != (1,):
                raise MalformedInputError("string points have a single coordinate")
            L = space.string_length
            if not -tol.chart <= chart[0] <= L + tol.chart * max(1.0, L):
                raise MalformedInputError(f"string coordinate must lie in [0, {L:g}], got {chart[0]!r}")
            return
        if tag != "sphere":
            raise MalformedInputError(f"balloon_string points need tag 'sphere' or 'string', got {tag!r}")
        _MODELS["sphere"].validate_point(space, chart, None, tol)

    def validate_tangent(self, v, tol):
        base, comps = v.base, v.components
        if v.tag == "string":
            if base.tag != "string" and not is_gluing_point(base):
                raise MalformedInputError("string-tagged tangent vectors need a string base point")
            if comps.shape not in ((1,), (4,)):
                raise MalformedInputError("string tangent vectors are (ds,) or (ds, m0, m1, m2)")
            return
        if v.tag != "sphere" or base.tag != "sphere":
            raise MalformedInputError("sphere-tagged tangent vectors need a sphere base point")
        if comps.shape != (3,):
            raise MalformedInputError("sphere tangent vectors have three components")
        R = base.space.sphere_radius
        if abs(float(base.chart @ comps)) > 1e3 * tol.chart * max(1.0, R) * max(1.0, float(np.linalg.norm(comps))):
            raise MalformedInputError("sphere tangent vector is not orthogonal to its base")

    def pack(self, p):
        if p.tag == "string":
            return np.concatenate([_south(p.space), p.chart])
        return np.concatenate([p.chart, [0.0]])

    def unpack(self, space, row):
        if row[3] > 0:
            return Point(space, row[3:4], "string")
        return Point(space, row[:3], "sphere")

    def dist(self, space, a, b):
        sphere_d = _MODELS["sphere"].dist(space, a[..., :3], b[..., :3])
        sa, sb = a[..., 3], b[..., 3]
        both = (sa > 0) & (sb > 0)
        return np.where(both, np.abs(sa - sb), sphere_d + sa + sb)

    def log_rows(self, space, x, ys, tol, tie_break):
        raise PreconditionError("balloon_string logarithms are computed point by point")

    def log_point(self, p: Point, q: Point, tol: Tolerances, tie_break: bool) -> TangentVector:
        space = p.space
        sphere = _MODELS["sphere"]
        S = _south(space)
        if p.tag == "sphere":
            if q.tag == "sphere":
                v = sphere.log_rows(space, p.chart, q.chart, tol, tie_break)[0]
                return TangentVector(p, v, "sphere")
            s = float(q.chart[0])
            if is_gluing_point(p):
                return TangentVector(p, [s], "string")
            v0 = sphere.log_rows(space, p.chart, S, tol, tie_break)[0]
            n0 = float(np.linalg.norm(v0))
            return TangentVector(p, v0 * ((n0 + s) / n0), "sphere")
        s_p = float(p.chart[0])
        if q.tag == "string":
            return TangentVector(p, [float(q.chart[0]) - s_p], "string")
        if is_gluing_point(q):
            return TangentVector(p, [-s_p], "string")
        m = sphere.log_rows(space, S, q.chart, tol, tie_break)[0]
        nm = float(np.linalg.norm(m))
        return TangentVector(p, np.concatenate([[-(s_p + nm)], m / nm]), "string")

    def exp_vec(self, v, tol):
        space = v.base.space
        R, L = space.sphere_radius, space.string_length
        base, comps = v.base, v.components
        S = _south(space)
        if v.tag == "sphere":
            n = float(np.linalg.norm(comps))
            if n == 0.0:
                return base
            if not is_gluing_point(base):
                to_s = float(_MODELS["sphere"].dist(space, base.chart, S))
                if n > to_s and _aims_at_gluing(base.chart, comps, S, R):
                    return _string_or_end(space, n - to_s, tol)
            return Point(space, _sphere_exp(base.chart, comps, R), "sphere")
        s_new = (0.0 if base.tag != "string" else float(base.chart[0])) + float(comps[0])
        if s_new >= 0.0:
            if s_new > L + tol.chart * max(1.0, L):
                raise PreconditionError(f"geodesic runs past the end of the string (s={s_new:.6g} > {L:g})")
            if s_new == 0.0:
                return Point(space, S, "sphere")
            return Point(space, [min(s_new, L)], "string")
        if comps.shape != (4,):
            raise BranchAmbiguityError(
                "geodesic leaves the string through the gluing point; supply the meridian "
                "direction as an explicit sphere tangent"
            )
        m = comps[1:]
        return Point(space, _sphere_exp(S, m / np.linalg.norm(m) * (-s_new), R), "sphere")

    def inner(self, base, u, v):
        if base.tag == "string" or u.shape[0] in (1, 4):
            return float(u[0] * v[0])
        return float(u @ v)

    def project_tangent(self, space, x, v):
        return v - (x[:3] @ v) / space.sphere_radius**2 * x[:3]

    def apply(self, g, rows):
        out = rows.copy()
        sphere_rows = out[..., 3] <= 0
        u = out[..., :3] @ g.matrix.T
        u = u * (g.space.sphere_radius / np.linalg.norm(u, axis=-1, keepdims=True))
        out[..., :3] = np.where(sphere_rows[..., None], u, out[..., :3])
        return out

    def validate_isometry(self, g, tol):
        _check_orthogonal(g.matrix, tol)
        S = _south(g.space)
        if np.linalg.norm(g.matrix @ S - S) > tol.isometry * max(1.0, g.space.sphere_radius):
            raise IsometryError("balloon_string isometries must fix the gluing point")
        if np.any(g.translation != 0):
            raise IsometryError("balloon_string isometries have no translation part")


def _south(space: Space) -> np.ndarray:
    return np.array([0.0, 0.0, -space.sphere_radius])


def is_gluing_point(p: Point) -> bool:
    """True for the balloon point where the string meets the sphere."""
    if p.space.kind != "balloon_string":
        return False
    if p.tag == "string":
        return float(p.chart[0]) <= 0.0
    return bool(np.linalg.norm(p.chart - _south(p.space)) <= 1e-12 * max(1.0, p.space.sphere_radius))


def _aims_at_gluing(x: np.ndarray, v: np.ndarray, S: np.ndarray, R: float) -> bool:
    if np.linalg.norm(x + S) <= 1e-12 * max(1.0, R):
        return True  # every great circle from the north pole passes the gluing point
    diff = S - x
    w = diff - (diff @ x) / R**2 * x
    nw, nv = np.linalg.norm(w), np.linalg.norm(v)
    return bool(nw > 0 and np.linalg.norm(w / nw - v / nv) <= 1e-9)


def _string_or_end(space: Space, s: float, tol: Tolerances) -> Point:
    L = space.string_length
    if s > L + tol.chart * max(1.0, L):
        raise PreconditionError(f"geodesic runs past the end of the string (s={s:.6g} > {L:g})")
    return Point(space, [min(s, L)], "string")


# ---------------------------------------------------------------------------
# Point construction helpers
# ---------------------------------------------------------------------------


def make_point(space: Space, coords: Sequence[float] | np.ndarray, tag: PointTag | None = None) -> Point:
    """Build a Point from raw coordinates, projecting them onto the model.

    * sphere: the vector is rescaled to the embedding radius.
    * hyperbolic: either ``dim`` spatial coordinates or a full ambient vector;
      the time coordinate is recomputed from the spatial part.
    * flat_cylinder: the angle is reduced modulo the circumference.
    * balloon_string: ``tag`` selects the component; a string coordinate of 0
      becomes the south pole of the sphere.
    """
    arr = np.asarray(coords, dtype=float).reshape(-1)
    kind = space.kind
    if kind == "euclidean":
        return Point(space, arr)
    if kind == "sphere":
        return Point(space, _rescale(arr, space.sphere_radius))
    if kind == "hyperbolic":
        if arr.shape[0] == space.dim:
            return Point(space, _hyperboloid_lift(arr, space.radius))
        if arr.shape[0] == space.dim + 1:
            return Point(space, _hyperboloid_lift(arr[1:], space.radius))
        raise MalformedInputError(
            f"hyperbolic coordinates need {space.dim} or {space.dim + 1} entries, got {arr.shape[0]}"
        )
    if kind == "flat_cylinder":
        if arr.shape != (2,):
            raise MalformedInputError("cylinder coordinates are (axial, angle)")
        return Point(space, [arr[0], _wrap_angle(arr[1], space.circumference)])
    if tag == "string":
        if arr.shape != (1,):
            raise MalformedInputError("string coordinates are a single arclength")
        if arr[0] <= 0.0:
            return Point(space, _south(space), "sphere")
        return Point(space, arr, "string")
    if tag == "sphere":
        return Point(space, _rescale(arr, space.sphere_radius), "sphere")
    raise MalformedInputError(f"balloon_string points need tag 'sphere' or 'string', got {tag!r}")


def _rescale(arr: np.ndarray, R: float) -> np.ndarray:
    n = np.linalg.norm(arr)
    if n == 0.0:
        raise MalformedInputError("cannot project the zero vector onto a sphere")
    return arr * (R / n)


def sphere_point(space: Space, direction: Sequence[float] | np.ndarray) -> Point:
    """Point of a sphere (or the balloon) in the direction of an ambient vector."""
    if space.kind not in ("sphere", "balloon_string"):
        raise PreconditionError("sphere_point needs a sphere or balloon_string")
    return make_point(space, direction, "sphere" if space.kind == "balloon_string" else None)


def spherical_point(space: Space, colatitude: float, longitude: float = 0.0) -> Point:
    """Point of a 2-sphere (or the balloon) at the given colatitude/longitude in radians."""
    if space.kind not in ("sphere", "balloon_string") or space.dim != 2:
        raise PreconditionError("spherical_point needs a 2-sphere or balloon_string")
    R = space.sphere_radius
    u = R * np.array([
        math.sin(colatitude) * math.cos(longitude),
        math.sin(colatitude) * math.sin(longitude),
        math.cos(colatitude),
    ])
    return make_point(space, u, "sphere" if space.kind == "balloon_string" else None)


def hyperbolic_point(space: Space, spatial: Sequence[float]) -> Point:
    """Point of the hyperboloid with the given spatial coordinates."""
    if space.kind != "hyperbolic":
        raise PreconditionError("hyperbolic_point needs a hyperbolic space")
    return make_point(space, spatial)


def north_pole(space: Space) -> Point:
    R = space.sphere_radius
    top = np.zeros(space.chart_dim)
    top[-1] = R
    return Point(space, top, "sphere" if space.kind == "balloon_string" else None)


def south_pole(space: Space) -> Point:
    R = space.sphere_radius
    bottom = np.zeros(space.chart_dim)
    bottom[-1] = -R
    return Point(space, bottom, "sphere" if space.kind == "balloon_string" else None)


def gluing_point(space: Space) -> Point:
    """The balloon's south pole, where the string is attached."""
    if space.kind != "balloon_string":
        raise PreconditionError("only balloon_string has a gluing point")
    return south_pole(space)


def string_point(space: Space, s: float) -> Point:
    """Point on the string at arclength ``s`` from the gluing point."""
    if space.kind != "balloon_string":
        raise PreconditionError("only balloon_string has a string")
    return make_point(space, [s], "string")


# ---------------------------------------------------------------------------
# Tangent vectors
# ---------------------------------------------------------------------------


def tangent(base: Point, components: Sequence[float] | np.ndarray, tag: PointTag | None = None) -> TangentVector:
    """Tangent vector at ``base``; ambient components are projected onto the tangent space."""
    comps = np.asarray(components, dtype=float).reshape(-1)
    if base.space.kind in ("sphere", "hyperbolic") or (
        base.space.kind == "balloon_string" and tag != "string" and base.tag == "sphere"
    ):
        comps = _model(base.space).project_tangent(base.space, base.chart, comps)
    return TangentVector(base, comps, tag)


def zero_vector(p: Point) -> TangentVector:
    if p.space.kind == "balloon_string" and p.tag == "string":
        return TangentVector(p, [0.0], "string")
    return TangentVector(p, np.zeros(p.space.chart_dim))


def scale(v: TangentVector, a: float) -> TangentVector:
    """``a · v``; the meridian direction of a string vector is kept as is."""
    comps = v.components.copy()
    if v.tag == "string" and comps.shape == (4,):
        comps[0] *= a
    else:
        comps *= a
    return TangentVector(v.base, comps, v.tag)


def inner(u: TangentVector, v: TangentVector) -> float:
    """Riemannian inner product of two vectors at the same base point."""
    if u.base is not v.base and distance(u.base, v.base) > DEFAULT_TOLERANCES.merge:
        raise PreconditionError("inner product of vectors at different base points")
    return _model(u.space).inner(u.base, u.components, v.components)


def norm(v: TangentVector) -> float:
    return math.sqrt(max(inner(v, v), 0.0))


# ---------------------------------------------------------------------------
# Distances, exp, log
# ---------------------------------------------------------------------------


def _same_space(p: Point, q: Point) -> None:
    if p.space != q.space:
        raise SpaceMismatchError(f"points live on different spaces: {p.space} vs {q.space}")


def pack(points: Sequence[Point]) -> np.ndarray:
    """Stack points into the packed array used by the vectorized kernels."""
    if not points:
        raise MalformedInputError("cannot pack an empty point list")
    space = points[0].space
    model = _model(space)
    for p in points:
        if p.space != space:
            raise SpaceMismatchError(f"points live on different spaces: {space} vs {p.space}")
    return np.stack([model.pack(p) for p in points])


def unpack(space: Space, rows: np.ndarray) -> list[Point]:
    model = _model(space)
    return [model.unpack(space, row) for row in np.atleast_2d(rows)]


def distance(p: Point, q: Point) -> float:
    """Geodesic distance between two points of the same space."""
    _same_space(p, q)
    model = _model(p.space)
    return float(model.dist(p.space, model.pack(p), model.pack(q)))


def pairwise_distances(
    points_a: Sequence[Point] | np.ndarray,
    points_b: Sequence[Point] | np.ndarray | None = None,
    space: Space | None = None,
    chunk: int = 2048,
) -> np.ndarray:
    """Distance matrix between two point collections.

    Either pass Point sequences, or packed arrays together with ``space``.
    """
    if isinstance(points_a, np.ndarray):
        if space is None:
            raise PreconditionError("packed arrays need an explicit space")
        A = points_a
    else:
        space = points_a[0].space
        A = pack(points_a)
    if points_b is None:
        B = A
    elif isinstance(points_b, np.ndarray):
        B = points_b
    else:
        if points_b[0].space != space:
            raise SpaceMismatchError(f"points live on different spaces: {space} vs {points_b[0].space}")
        B = pack(points_b)
    model = _model(space)
    out = np.empty((A.shape[0], B.shape[0]))
    for start in range(0, A.shape[0], chunk):
        block = A[start : start + chunk]
        out[start : start + chunk] = model.dist(space, block[:, None, :], B[None, :, :])
    return out


def exp(v: TangentVector, tol: Tolerances = DEFAULT_TOLERANCES) -> Point:
    """Endpoint of the unit-time geodesic with initial velocity ``v``."""
    return _model(v.space).exp_vec(v, tol)


def log(p: Point, q: Point, tie_break: bool = False, tol: Tolerances = DEFAULT_TOLERANCES) -> TangentVector:
    """Initial velocity of the minimizing geodesic from ``p`` to ``q``.

    Raises
    ------
    CutLocusError
        If ``q`` lies in the cut locus of ``p`` and ``tie_break`` is False.
    """
    _same_space(p, q)
    model = _model(p.space)
    if p.space.kind == "balloon_string":
        return model.log_point(p, q, tol, tie_break)  # type: ignore[attr-defined]
    comps = model.log_rows(p.space, p.chart, q.chart[None, :], tol, tie_break)[0]
    return TangentVector(p, comps)


def log_many(
    p: Point, qs: Sequence[Point], tie_break: bool = False, tol: Tolerances = DEFAULT_TOLERANCES
) -> np.ndarray:
    """Logarithms from ``p`` to every point of ``qs`` as an array of components.

    On the balloon every row must be a sphere-tagged vector, so ``p`` must be
    a sphere point other than the gluing point.
    """
    model = _model(p.space)
    if p.space.kind == "balloon_string":
        if p.tag != "sphere" or is_gluing_point(p):
            raise BranchAmbiguityError("tangent sums at string or gluing points are undefined")
        return np.stack([model.log_point(p, q, tol, tie_break).components for q in qs])  # type: ignore[attr-defined]
    return model.log_rows(p.space, p.chart, pack(qs), tol, tie_break)


def geodesic_point(
    p: Point, q: Point, t: float, tie_break: bool = False, tol: Tolerances = DEFAULT_TOLERANCES
) -> Point:
    """Point at fraction ``t`` along the minimizing geodesic from ``p`` to ``q``."""
    if not 0.0 <= t <= 1.0:
        raise PreconditionError(f"t must lie in [0, 1], got {t!r}")
    _same_space(p, q)
    if t == 0.0:
        return p
    if t == 1.0:
        return q
    return exp(scale(log(p, q, tie_break=tie_break, tol=tol), t), tol=tol)


# ---------------------------------------------------------------------------
# Isometries
# ---------------------------------------------------------------------------


def apply_isometry(g: Isometry, p: Point) -> Point:
    if g.space != p.space:
        raise SpaceMismatchError(f"isometry of {g.space} applied to a point of {p.space}")
    model = _model(p.space)
    return model.unpack(p.space, model.apply(g, model.pack(p)[None, :])[0])


def map_points(g: Isometry, points: Sequence[Point]) -> list[Point]:
    """Apply ``g`` to every point in one vectorized pass."""
    if points and points[0].space != g.space:
        raise SpaceMismatchError(f"isometry of {g.space} applied to points of {points[0].space}")
    if not points:
        return []
    model = _model(g.space)
    return unpack(g.space, model.apply(g, pack(points)))


def identity(space: Space) -> Isometry:
    return Isometry(space, np.eye(space.chart_dim))


def _plane_rotation(n: int, angle: float, i: int, j: int) -> np.ndarray:
    m = np.eye(n)
    c, s = math.cos(angle), math.sin(angle)
    m[i, i], m[i, j], m[j, i], m[j, j] = c, -s, s, c
    return m


def rotation(space: Space, angle: float, axes: tuple[int, int] = (0, 1)) -> Isometry:
    """Rotation by ``angle`` in the coordinate plane ``axes``.

    For hyperbolic spaces ``axes`` index spatial coordinates. On the balloon
    only the polar-axis plane (0, 1) fixes the gluing point.
    """
    i, j = axes
    if space.kind == "flat_cylinder":
        raise PreconditionError("use cylinder_isometry for flat_cylinder")
    if space.kind == "hyperbolic":
        i, j = i + 1, j + 1
    return Isometry(space, _plane_rotation(space.chart_dim, angle, i, j))


def reflection(space: Space, axis: int = 0) -> Isometry:
    """Reflection negating one coordinate (spatial for hyperbolic, axial/angular for the cylinder)."""
    m = np.eye(space.chart_dim)
    idx = axis + 1 if space.kind == "hyperbolic" else axis
    m[idx, idx] = -1.0
    return Isometry(space, m)


def point_reflection(space: Space) -> Isometry:
    """x ↦ −x (Euclidean central symmetry, sphere antipodal map)."""
    if space.kind not in ("euclidean", "sphere"):
        raise PreconditionError(f"point_reflection is not defined on {space.kind}")
    return Isometry(space, -np.eye(space.chart_dim))


def translation(space: Space, vector: Sequence[float]) -> Isometry:
    if space.kind not in ("euclidean", "flat_cylinder"):
        raise PreconditionError(f"translations are not defined on {space.kind}")
    return Isometry(space, np.eye(space.chart_dim), vector)


def hyperbolic_boost(space: Space, rapidity: float, axis: int = 0) -> Isometry:
    """Lorentz boost moving the origin a distance ``rapidity·radius`` along a spatial axis."""
    if space.kind != "hyperbolic":
        raise PreconditionError("boosts need a hyperbolic space")
    m = np.eye(space.chart_dim)
    k = axis + 1
    ch, sh = math.cosh(rapidity), math.sinh(rapidity)
    m[0, 0], m[0, k], m[k, 0], m[k, k] = ch, sh, sh, ch
    return Isometry(space, m)


def cylinder_isometry(
    space: Space,
    axial_shift: float = 0.0,
    angular_shift: float = 0.0,
    axial_reflect: bool = False,
    angular_reflect: bool = False,
) -> Isometry:
    if space.kind != "flat_cylinder":
        raise PreconditionError("cylinder_isometry needs a flat_cylinder")
    m = np.diag([-1.0 if axial_reflect else 1.0, -1.0 if angular_reflect else 1.0])
    return Isometry(space, m, [axial_shift, angular_shift])


def compose(g: Isometry, h: Isometry) -> Isometry:
    """g ∘ h (apply h first)."""
    if g.space != h.space:
        raise SpaceMismatchError("cannot compose isometries of different spaces")
    return _model(g.space).compose(g, h)


def inverse(g: Isometry) -> Isometry:
    return _model(g.space).inverse(g)


def isometries_close(g: Isometry, h: Isometry, tol: float = DEFAULT_TOLERANCES.merge) -> bool:
    if g.space != h.space:
        return False
    if np.max(np.abs(g.matrix - h.matrix)) > tol:
        return False
    dt = g.translation - h.translation
    if g.space.kind == "flat_cylinder":
        dt = np.array([dt[0], _signed_angle(dt[1], g.space.circumference)])
    return bool(np.max(np.abs(dt)) <= tol)


def point_sort_key(p: Point) -> tuple:
    """Lexicographic ordering key: component tag first, then chart coordinates."""
    return (_TAG_ORDER[p.tag], *p.chart.tolist())
