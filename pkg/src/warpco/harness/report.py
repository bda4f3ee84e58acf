"""CSV/JSON report emission."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict
from pathlib import Path
from typing import Sequence

from .experiments import HighRateRecord
from .metrics import RdCurve, RdPoint

CSV_COLUMNS = ("label", "mode", "qp", "bits_per_frame", "fsnr_y_db", "sse_z", "sse_y", "encode_ms")


def curve_rows(curves: Sequence[RdCurve]) -> list[dict]:
    rows = []
    for curve in curves:
        for p in curve.points:
            rows.append({
                "label": curve.label,
                "mode": curve.mode,
                "qp": p.qp,
                "bits_per_frame": p.rate,
                "fsnr_y_db": p.quality,
                "sse_z": p.sse_z,
                "sse_y": p.sse_y,
                "encode_ms": p.encode_ms,
            })
    return rows


def _fmt(v) -> str:
    if isinstance(v, float):
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return repr(v)
    return str(v)


def render_csv(curves: Sequence[RdCurve]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for row in curve_rows(curves):
        w.writerow([_fmt(row[c]) for c in CSV_COLUMNS])
    return buf.getvalue()


def render_json(
    curves: Sequence[RdCurve],
    bd_table: Sequence[dict] = (),
    validation: Sequence[HighRateRecord] = (),
) -> str:
    doc = {
        "columns": list(CSV_COLUMNS),
        "rows": curve_rows(curves),
        "bd": [dict(r) for r in bd_table],
        "validation": [asdict(r) for r in validation],
    }
    return json.dumps(doc, indent=2, sort_keys=False, allow_nan=True) + "\n"


def emit_report(
    curves: Sequence[RdCurve],
    bd_table: Sequence[dict] = (),
    validation: Sequence[HighRateRecord] = (),
    path: str | Path | None = None,
    format: str = "csv",
) -> str:
    """Render the report and write it to ``path`` when given.

    CSV carries one row per RD point; the BD table and validation records
    only travel in the JSON form.
    """
    if format == "csv":
        text = render_csv(curves)
    elif format == "json":
        text = render_json(curves, bd_table, validation)
    else:
        raise ValueError(f"unknown report format {format!r}")
    if path is not None:
        Path(path).write_text(text)
    return text


def curves_from_json(text: str) -> list[RdCurve]:
    """Rebuild curves from a JSON report (rows grouped by label, in order)."""
    doc = json.loads(text)
    curves: dict[str, RdCurve] = {}
    for row in doc["rows"]:
        curve = curves.setdefault(row["label"], RdCurve(row["label"], row["mode"]))
        curve.points.append(RdPoint(
            qp=int(row["qp"]),
            rate=float(row["bits_per_frame"]),
            quality=float(row["fsnr_y_db"]),
            sse_z=float(row["sse_z"]),
            sse_y=float(row["sse_y"]),
            encode_ms=float(row["encode_ms"]),
        ))
    return list(curves.values())
