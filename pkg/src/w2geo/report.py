from __future__ import annotations

__all__ = [
    "report_to_dict",
    "report_from_dict",
    "render_table",
    "render_markdown",
    "render_json",
    "save_report",
    "load_report",
    "reports_match",
]

import dataclasses
import json
from datetime import datetime, timezone
from pathlib import Path

import pandas as pd

from w2geo.experiments import Assertion, ExperimentReport
from w2geo.schema import to_jsonable


# ---------------------------------------------------------------------------
# Serialization helpers
# ---------------------------------------------------------------------------

def report_to_dict(report: ExperimentReport) -> dict:
    """Convert an ExperimentReport to a JSON-serialisable dict."""
    d = to_jsonable(dataclasses.asdict(report))
    d["passed"] = report.passed
    return d


def report_from_dict(d: dict) -> ExperimentReport:
    """Reconstruct an ExperimentReport from a previously serialised dict."""
    assertions = []
    for a in d.get("assertions", []):
        assertions.append(
            Assertion(
                name=a["name"],
                computed=float("nan") if a["computed"] is None else a["computed"],
                expected=a.get("expected"),
                tolerance=a.get("tolerance", 0.0),
                provenance=a["provenance"],
                passed=a["passed"],
                relation=a.get("relation", "=="),
            )
        )
    return ExperimentReport(
        name=d["name"],
        space=d["space"],
        parameters=d.get("parameters", {}),
        inputs=d.get("inputs", {}),
        quantities=d.get("quantities", {}),
        assertions=assertions,
        runtime=d.get("runtime", 0.0),
        notes=d.get("notes", []),
    )


# ---------------------------------------------------------------------------
# Rendering
# ---------------------------------------------------------------------------

_PASS_ICON = {True: "✓", False: "✗"}


def render_table(reports: list[ExperimentReport]) -> pd.DataFrame:
    """One row per assertion across *reports*."""
    rows = []
    for r in reports:
        for a in r.assertions:
            rows.append(
                {
                    "experiment": r.name,
                    "assertion": a.name,
                    "computed": a.computed,
                    "relation": a.relation,
                    "expected": a.expected,
                    "tolerance": a.tolerance,
                    "provenance": a.provenance,
                    "pass": a.passed,
                }
            )
    columns = ["experiment", "assertion", "computed", "relation", "expected", "tolerance", "provenance", "pass"]
    return pd.DataFrame(rows, columns=columns)


def render_markdown(report: ExperimentReport) -> str:
    """Render an ExperimentReport as a Markdown document."""
    lines: list[str] = []
    status = "PASS" if report.passed else "FAIL"
    lines.append(f"# Experiment `{report.name}`: {status}")
    lines.append(f"\nSpace: {report.space}  ")
    lines.append(f"Runtime: {report.runtime:.3f} s\n")

    if report.parameters:
        lines.append("## Parameters\n")
        lines.append("| Parameter | Value |")
        lines.append("|-----------|-------|")
        for key, value in report.parameters.items():
            lines.append(f"| {key} | {value} |")
        lines.append("")

    lines.append("## Assertions\n")
    lines.append("| | Assertion | Computed | Relation | Expected | Tolerance | Provenance |")
    lines.append("|-|-----------|----------|----------|----------|-----------|------------|")
    for a in report.assertions:
        expected = "" if a.expected is None else f"{a.expected:.12g}"
        lines.append(
            f"| {_PASS_ICON[a.passed]} | {a.name} | {a.computed:.12g} | {a.relation} | "
            f"{expected} | {a.tolerance:g} | {a.provenance} |"
        )
    lines.append("")

    scalars = {k: v for k, v in report.quantities.items() if isinstance(v, (int, float))}
    if scalars:
        lines.append("## Quantities\n")
        for key, value in scalars.items():
            lines.append(f"- `{key}`: {value:.12g}")
        lines.append("")

    if report.notes:
        lines.append("## Notes\n")
        lines.extend(f"- {note}" for note in report.notes)
        lines.append("")
    return "\n".join(lines)


def render_json(reports: ExperimentReport | list[ExperimentReport]) -> str:
    """Render one report (object) or several (array) as JSON."""
    if isinstance(reports, ExperimentReport):
        return json.dumps(report_to_dict(reports), indent=2)
    return json.dumps([report_to_dict(r) for r in reports], indent=2)


# ---------------------------------------------------------------------------
# File I/O
# ---------------------------------------------------------------------------

def save_report(
    report: ExperimentReport,
    output_dir: Path,
    fmt: str = "json",
) -> Path:
    """Save a report to a timestamped file.

    Parameters
    ----------
    report:
        The experiment report to save.
    output_dir:
        Directory to write into (created if needed).
    fmt:
        ``"json"`` or ``"markdown"``.

    Returns
    -------
    Path
        Path of the written file.
    """
    output_dir = Path(output_dir)
    output_dir.mkdir(parents=True, exist_ok=True)

    ts = datetime.now(timezone.utc).strftime("%Y%m%d_%H%M%S_%f")
    ext = "md" if fmt == "markdown" else "json"
    out_path = output_dir / f"{report.name}_{ts}.{ext}"
    content = render_markdown(report) if fmt == "markdown" else render_json(report)
    out_path.write_text(content, encoding="utf-8")
    return out_path


def load_report(path: Path) -> ExperimentReport:
    return report_from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def reports_match(a: ExperimentReport, b: ExperimentReport) -> bool:
    """True when two runs agree bit for bit (runtime excluded)."""
    da, db = report_to_dict(a), report_to_dict(b)
    da.pop("runtime")
    db.pop("runtime")
    return json.dumps(da, sort_keys=True) == json.dumps(db, sort_keys=True)
