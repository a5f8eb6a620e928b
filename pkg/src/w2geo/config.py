from __future__ import annotations

__all__ = [
    "Tolerances",
    "FrechetSettings",
    "BarycenterSettings",
    "TransportSettings",
    "W2Config",
    "DEFAULT_TOLERANCES",
]

from dataclasses import dataclass, field, fields
from pathlib import Path

import yaml


@dataclass(frozen=True)
class Tolerances:
    """Every numerical tolerance used by the library, in one place."""

    chart: float = 1e-12  # embedding constraints (sphere radius, hyperboloid norm, tangency)
    roundtrip: float = 1e-10  # exp(log(p, q)) == q
    isometry: float = 1e-8  # orthogonality / Lorentz condition of isometry matrices
    merge: float = 1e-9  # atoms closer than this are the same atom
    normalization: float = 1e-6  # largest accepted deviation of raw weights from 1
    weight_sum: float = 1e-12  # canonical weights sum to 1 within this
    marginal: float = 1e-9  # coupling row/column sums
    cut_locus: float = 1e-10  # relative distance to the cut locus treated as "on" it
    convexity: float = 1e-8  # second differences above -convexity count as convex
    residual: float = 1e-10  # Karcher gradient norm on NPC spaces
    first_variation_residual: float = 1e-8
    barycenter_residual: float = 1e-6  # converged barycenter for Jensen checks
    inequality: float = 1e-7  # slack for the variance inequalities

    def __post_init__(self) -> None:
        for f in fields(self):
            value = getattr(self, f.name)
            if not value > 0:
                raise ValueError(f"Tolerance {f.name!r} must be positive, got {value!r}")


DEFAULT_TOLERANCES = Tolerances()


@dataclass(frozen=True)
class FrechetSettings:
    """Settings for point barycenter searches."""

    max_iter: int = 10_000
    step: float = 0.5  # Karcher step size
    grid_resolution: int = 720  # points per closed geodesic on non-NPC spaces
    refine_starts: int = 8  # best grid candidates refined by descent
    random_starts: int = 512  # spheres of dim >= 3 have no grid
    multiplicity_value: float = 1e-6
    multiplicity_distance: float = 1e-3

    def __post_init__(self) -> None:
        _require_positive(self)
        if not self.step <= 1.0:
            raise ValueError(f"Karcher step must lie in (0, 1], got {self.step!r}")


@dataclass(frozen=True)
class BarycenterSettings:
    """Settings for the free-support Wasserstein barycenter iteration."""

    max_iter: int = 500
    tol: float = 1e-9  # stop when the objective decreases by less than this

    def __post_init__(self) -> None:
        _require_positive(self)


@dataclass(frozen=True)
class TransportSettings:
    """Settings for the exact OT solver."""

    max_atoms: int = 10_000
    assignment_fast_path: bool = True
    num_iter_max: int = 1_000_000

    def __post_init__(self) -> None:
        if self.max_atoms <= 0 or self.num_iter_max <= 0:
            raise ValueError("max_atoms and num_iter_max must be positive")


@dataclass
class W2Config:
    """All tolerances, solver settings and output locations in one place."""

    tolerances: Tolerances = field(default_factory=Tolerances)
    frechet: FrechetSettings = field(default_factory=FrechetSettings)
    barycenter: BarycenterSettings = field(default_factory=BarycenterSettings)
    transport: TransportSettings = field(default_factory=TransportSettings)

    # Seed for every experiment runner that is not given one explicitly.
    seed: int = 0

    # JSONL run log. Defaults to <report_dir>/w2geo_runs.jsonl when only report_dir is set.
    log_file: Path | None = None

    # Directory where experiment reports are saved as timestamped JSON.
    report_dir: Path | None = None

    def __post_init__(self) -> None:
        if self.seed < 0:
            raise ValueError(f"seed must be a non-negative integer, got {self.seed!r}")

    @classmethod
    def from_yaml(cls, path: str | Path) -> "W2Config":
        """Load config from a YAML file, overriding defaults.

        Raises
        ------
        ValueError
            If the file contains invalid YAML syntax or a setting is out of range.
        FileNotFoundError
            If *path* does not exist.
        """
        with open(path) as f:
            try:
                data = yaml.safe_load(f) or {}
            except yaml.YAMLError as exc:
                raise ValueError(f"Invalid YAML in {path}: {exc}") from exc

        for key in ("log_file", "report_dir"):
            if data.get(key) is not None:
                data[key] = Path(data[key])

        sections = {
            "tolerances": Tolerances,
            "frechet": FrechetSettings,
            "barycenter": BarycenterSettings,
            "transport": TransportSettings,
        }
        for key, section_cls in sections.items():
            if key in data:
                data[key] = section_cls(**(data[key] or {}))

        return cls(**data)

    def with_tolerance(self, convexity: float) -> "W2Config":
        """Return a copy whose convexity tolerance is overridden (CLI ``--tol``)."""
        from dataclasses import replace

        return replace(self, tolerances=replace(self.tolerances, convexity=convexity))


def _require_positive(settings: object) -> None:
    for f in fields(settings):  # type: ignore[arg-type]
        value = getattr(settings, f.name)
        if isinstance(value, (int, float)) and not isinstance(value, bool) and value <= 0:
            raise ValueError(
                f"{type(settings).__name__}.{f.name} must be positive, got {value!r}"
            )
