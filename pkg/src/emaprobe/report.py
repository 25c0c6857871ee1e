"""Tables and plot-ready series from grid results.

Everything emitted here is plot DATA (CSV or JSON text), not rendered
images. Values shown rounded are always accompanied by the full-precision
number they came from, and re-emitting from the same results is
byte-identical.
"""

from __future__ import annotations

import json
import math
import os
from pathlib import Path

from .errors import ValidationError
from .experiments import AblationResult
from .scoring import ArticulatoryScore, LayerProfile, find_score_peaks

CSV, JSON = "csv", "json"
FULL_LABEL = "full"


def format_budget(budget_seconds: float | None) -> str:
    """Column label for a budget: '20s', '5m', or 'full'."""
    if budget_seconds is None:
        return FULL_LABEL
    if budget_seconds >= 60 and budget_seconds % 60 == 0:
        return f"{int(budget_seconds // 60)}m"
    return f"{budget_seconds:g}s"


def round2(value: float) -> str:
    """The 2-decimal display rule used across all tables."""
    return f"{value:.2f}"


def _write_text(path: Path, text: str) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text, encoding="utf-8")
    os.replace(tmp, path)
    return path


def _write_json(path: Path, payload: dict) -> Path:
    return _write_text(path, json.dumps(payload, sort_keys=True, indent=2) + "\n")


def emit_score_table(ablation: AblationResult, path: str | Path, fmt: str = CSV) -> Path:
    """Subjects-by-budgets score table with an unweighted Average footer.

    Cell values are rounded to 2 decimals for display; the Average row is
    computed from the full-precision values before rounding, and the exact
    values ride along in companion columns.
    """
    if fmt not in (CSV, JSON):
        raise ValidationError(f"unknown table format {fmt!r}")
    path = Path(path)
    columns: list[float | None] = [float(b) for b in ablation.budgets]
    if any(None in row for row in ablation.scores.values()):
        columns.append(None)
    missing = [
        f"({subject}, {format_budget(b)})"
        for subject in ablation.subjects
        for b in columns
        if b not in ablation.scores.get(subject, {})
    ]
    if missing:
        raise ValidationError(f"incomplete grid slice, missing cells: {', '.join(missing)}")

    averages = {
        b: math.fsum(ablation.scores[s][b] for s in ablation.subjects) / len(ablation.subjects)
        for b in columns
    }

    if fmt == JSON:
        payload = {
            "kind": "score-table",
            "budgets": [format_budget(b) for b in columns],
            "rows": [
                {
                    "subject": s,
                    "scores": {
                        format_budget(b): {
                            "display": round2(ablation.scores[s][b]),
                            "exact": ablation.scores[s][b],
                        }
                        for b in columns
                    },
                }
                for s in ablation.subjects
            ],
            "average": {
                format_budget(b): {"display": round2(averages[b]), "exact": averages[b]}
                for b in columns
            },
        }
        return _write_json(path, payload)

    header = ["subject"]
    for b in columns:
        header += [format_budget(b), format_budget(b) + "_exact"]
    lines = [",".join(header)]
    for s in ablation.subjects:
        row = [s]
        for b in columns:
            v = ablation.scores[s][b]
            row += [round2(v), repr(v)]
        lines.append(",".join(row))
    avg_row = ["Average"]
    for b in columns:
        avg_row += [round2(averages[b]), repr(averages[b])]
    lines.append(",".join(avg_row))
    return _write_text(path, "\n".join(lines) + "\n")


def emit_layer_series(profiles: dict[str, LayerProfile], path: str | Path) -> Path:
    """Named per-layer score series with local-peak annotations."""
    if not profiles:
        raise ValidationError("no layer profiles to emit")
    series = []
    for name in sorted(profiles):
        profile = profiles[name]
        peaks = find_score_peaks(profile) if len(profile) >= 3 else []
        series.append(
            {
                "name": name,
                "points": [[layer, score] for layer, score in enumerate(profile.scores)],
                "peaks": peaks,
                "per_subject": profile.per_subject,
            }
        )
    return _write_json(Path(path), {"kind": "layer-series", "series": series})


def emit_model_comparison(models: dict[str, ArticulatoryScore], path: str | Path) -> Path:
    """Overall bar per representation plus per-subject scatter points."""
    if not models:
        raise ValidationError("no model scores to emit")
    bars = []
    scatter = []
    for name in sorted(models):
        score = models[name]
        bars.append({"name": name, "score": score.overall, "label": round2(score.overall)})
        for subject in sorted(score.per_subject):
            scatter.append(
                {"model": name, "subject": subject, "score": score.per_subject[subject]}
            )
    return _write_json(Path(path), {"kind": "model-comparison", "bars": bars, "scatter": scatter})
