"""Run reports: JSON encoding, schema checks, console summary, GeoJSON and SVG output."""

from __future__ import annotations

import json
import math
from pathlib import Path
from typing import Any

import matplotlib
import numpy as np
from matplotlib.figure import Figure

from hybrid_levelset.boundary import ArcPolygonBoundary
from hybrid_levelset.boundary import to_geojson
from hybrid_levelset.constants import REPORT_SCHEMA_VERSION
from hybrid_levelset.constants import SVG_HASH_SALT
from hybrid_levelset.errors import ReportSchemaError

PLUS_COLOR = "#c0392b"
MINUS_COLOR = "#2471a3"
UNASSIGNED_COLOR = "#7f8c8d"
BOUNDARY_COLOR = "#1e8449"


def json_safe(value: Any) -> Any:
    """Convert numpy values, tuples and non-finite floats into plain JSON values.

    Infinities become the strings "inf"/"-inf" and NaN becomes null.
    """
    if isinstance(value, dict):
        return {str(key): json_safe(item) for key, item in value.items()}
    if isinstance(value, (list, tuple)):
        return [json_safe(item) for item in value]
    if isinstance(value, np.ndarray):
        return json_safe(value.tolist())
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        number = float(value)
        if math.isnan(number):
            return None
        if math.isinf(number):
            return "inf" if number > 0 else "-inf"
        return number
    return value


def write_json(path: Path, data: Any) -> Path:
    """Write sorted-key, indented JSON with a trailing newline."""
    path.write_text(json.dumps(json_safe(data), sort_keys=True, indent=2, allow_nan=False) + "\n", encoding="utf-8")
    return path


def build_report(
    *,
    version: str,
    seed: int,
    config: dict[str, Any],
    input_summary: dict[str, Any],
    model: dict[str, Any],
    split: dict[str, Any],
    estimate: dict[str, Any],
    region: dict[str, Any],
    calibration: dict[str, Any] | None = None,
    metrics: dict[str, float] | None = None,
) -> dict[str, Any]:
    report: dict[str, Any] = {
        "schema_version": REPORT_SCHEMA_VERSION,
        "version": version,
        "seed": seed,
        "config": config,
        "input": input_summary,
        "model": model,
        "split": split,
        "estimate": estimate,
        "region": region,
    }
    if calibration is not None:
        report["calibration"] = calibration
    if metrics:
        report["metrics"] = metrics
    return report


def write_report(report: dict[str, Any], path: Path) -> Path:
    return write_json(path, report)


def load_report(path: Path) -> dict[str, Any]:
    """Read a report and check its schema version.

    Raises:
        ReportSchemaError: If the file is not a report or has another schema version.
    """
    try:
        report = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise ReportSchemaError(f"{path} is not valid JSON: {e}") from e
    if not isinstance(report, dict):
        raise ReportSchemaError(f"{path} does not hold a report object")
    found = report.get("schema_version")
    if found != REPORT_SCHEMA_VERSION:
        raise ReportSchemaError(
            f"{path} has report schema version {found!r}; this tool reads version {REPORT_SCHEMA_VERSION}", found_version=found
        )
    return report


def _fmt(value: Any) -> str:
    if isinstance(value, float):
        return f"{value:.6g}"
    return str(value)


def format_report(report: dict[str, Any]) -> str:
    """Two-column plain-text summary; sections missing from the report are left out."""
    rows: list[tuple[str, Any]] = []
    source = report.get("input", {})
    rows.append(("n", source.get("n")))
    if "duplicates" in source:
        rows.append(("duplicate points", source["duplicates"]))
    bandwidth = report.get("model", {}).get("bandwidth")
    if bandwidth:
        rows.append(("bandwidth (h1, h2)", f"{_fmt(bandwidth['h1'])}, {_fmt(bandwidth['h2'])}"))
    split = report.get("split", {})
    if split:
        rows.append(("split mode", split.get("mode")))
        rows.append(("thresholds (+, -)", f"{_fmt(split.get('t_plus'))}, {_fmt(split.get('t_minus'))}"))
        rows.append(("plus / minus points", f"{split.get('plus')} / {split.get('minus')}"))
    calibration = report.get("calibration")
    if calibration:
        rows.append(
            (
                "k, tau+, tau-",
                f"{calibration['k_hat']}, {_fmt(calibration['tau_plus_hat'])}, {_fmt(calibration['tau_minus_hat'])}",
            )
        )
    estimate = report.get("estimate", {})
    if estimate:
        rows.append(("radius", _fmt(estimate.get("radius"))))
        rows.append(("nu", _fmt(estimate.get("nu"))))
        rows.append(("r_hat", _fmt(estimate.get("radius_estimate", {}).get("r_hat"))))
    region = report.get("region", {})
    if "area" in region:
        rows.append(("area", _fmt(region["area"])))
    if "components" in region:
        rows.append(("components", region["components"]))
    for name, value in sorted(report.get("metrics", {}).items()):
        rows.append((name, _fmt(value)))
    rows.append(("seed", report.get("seed")))
    rows.append(("version", report.get("version")))

    width = max(len(label) for label, _ in rows)
    return "\n".join(f"{label.ljust(width)}  {_fmt(value)}" for label, value in rows)


def write_geojson(
    boundary: ArcPolygonBoundary, path: Path, chord_tolerance: float, properties: dict[str, Any] | None = None
) -> Path:
    return write_json(path, to_geojson(boundary, chord_tolerance, properties))


def render_figure(
    points: np.ndarray,
    labels: np.ndarray,
    boundary: ArcPolygonBoundary | None,
    path: Path,
    chord_tolerance: float,
    title: str | None = None,
) -> Path:
    """SVG scatter of the sample coloured by split label, with the boundary rings on top.

    Every sample point is drawn as exactly one marker; text is emitted as SVG text
    and the file carries no date, so repeated runs give identical bytes.
    """
    figure = Figure(figsize=(6, 6))
    ax = figure.add_subplot(1, 1, 1)
    for value, color in ((1, PLUS_COLOR), (-1, MINUS_COLOR), (0, UNASSIGNED_COLOR)):
        chosen = points[labels == value]
        if len(chosen):
            ax.plot(chosen[:, 0], chosen[:, 1], linestyle="none", marker="o", markersize=2.5, color=color)
    if boundary is not None:
        for ring in boundary.rings:
            vertices = np.asarray(ring.flatten(chord_tolerance))
            if len(vertices) > 1:
                ax.plot(vertices[:, 0], vertices[:, 1], color=BOUNDARY_COLOR, linewidth=1.0)
    ax.set_aspect("equal", adjustable="datalim")
    if title:
        ax.set_title(title)
    with matplotlib.rc_context({"svg.hashsalt": SVG_HASH_SALT, "svg.fonttype": "none"}):
        figure.savefig(path, format="svg", metadata={"Date": None})
    return path
