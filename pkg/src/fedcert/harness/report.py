"""Output files: curve CSVs, an SVG plot, per-sample results, and checkpoints."""
from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from ..nn import ParamVector
from .metrics import CurveTable

CSV_FIELDS = ("client_id", "radius", "certified_accuracy", "acr")
AGGREGATES = ("mean", "min", "max")


def _open_for_write(path):
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        return open(path, "w", newline="")
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc


def emit_csv(table: CurveTable, path) -> None:
    """One row per (client, radius), then the mean, min and max rows."""
    agg_acr = table.aggregate_acr()
    with _open_for_write(path) as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(CSV_FIELDS)
        for cid in table.clients:
            for r, a in zip(table.radii, table.curves[cid]):
                w.writerow([cid, repr(float(r)), repr(float(a)), repr(table.acrs[cid])])
        for name in AGGREGATES:
            for r, a in zip(table.radii, getattr(table, name)):
                w.writerow([name, repr(float(r)), repr(float(a)), repr(agg_acr[name])])


def read_csv(path) -> CurveTable:
    curves, acrs, radii = {}, {}, {}
    with open(path, newline="") as f:
        for row in csv.DictReader(f):
            cid = row["client_id"]
            if cid in AGGREGATES:
                continue
            cid = int(cid)
            curves.setdefault(cid, []).append(float(row["certified_accuracy"]))
            radii.setdefault(cid, []).append(float(row["radius"]))
            acrs[cid] = float(row["acr"])
    if not curves:
        raise ValueError(f"{path}: no client rows")
    grid = next(iter(radii.values()))
    return CurveTable(np.array(grid), curves, acrs)


def emit_results_csv(rows, path) -> None:
    fields = ("client_id", "sample", "label", "prediction", "pa_lower", "radius", "norm")
    with _open_for_write(path) as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(fields)
        for row in rows:
            w.writerow([repr(v) if isinstance(v, float) else v for v in (row[k] for k in fields)])


def emit_log_csv(rows, path) -> None:
    fields = ("phase", "round", "epoch", "client", "loss")
    with _open_for_write(path) as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(fields)
        for row in rows:
            w.writerow([repr(float(row[k])) if k == "loss" else row[k] for k in fields])


def emit_svg(table: CurveTable, path, title: str = "", width: int = 480, height: int = 320) -> None:
    """Per-client polylines over a shaded min-max band, mean line on top."""
    left, right, top, bottom = 50, 15, 25, 40
    pw, ph = width - left - right, height - top - bottom
    rmax = float(table.radii[-1]) or 1.0

    def xy(r, a):
        return f"{left + pw * r / rmax:.2f},{top + ph * (1 - a):.2f}"

    def line(values):
        return " ".join(xy(r, a) for r, a in zip(table.radii, values))

    band = [xy(r, a) for r, a in zip(table.radii, table.max)]
    band += [xy(r, a) for r, a in zip(table.radii[::-1], table.min[::-1])]
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        '<rect width="100%" height="100%" fill="white"/>',
        f'<polygon points="{" ".join(band)}" fill="#1f77b4" fill-opacity="0.2" stroke="none"/>',
    ]
    for cid in table.clients:
        parts.append(f'<polyline points="{line(table.curves[cid])}" fill="none" stroke="#1f77b4" '
                     f'stroke-opacity="0.35" stroke-width="1"><title>client {cid}</title></polyline>')
    parts.append(f'<polyline points="{line(table.mean)}" fill="none" stroke="#d62728" stroke-width="2"/>')
    parts.append(f'<line x1="{left}" y1="{top + ph}" x2="{left + pw}" y2="{top + ph}" stroke="black"/>')
    parts.append(f'<line x1="{left}" y1="{top}" x2="{left}" y2="{top + ph}" stroke="black"/>')
    for frac in (0.0, 0.5, 1.0):
        parts.append(f'<text x="{left - 5}" y="{top + ph * (1 - frac) + 4:.2f}" font-size="11" '
                     f'text-anchor="end">{frac:.1f}</text>')
        parts.append(f'<text x="{left + pw * frac:.2f}" y="{top + ph + 15}" font-size="11" '
                     f'text-anchor="middle">{rmax * frac:.3g}</text>')
    parts.append(f'<text x="{left + pw / 2}" y="{height - 5}" font-size="12" text-anchor="middle">'
                 f'radius</text>')
    if title:
        parts.append(f'<text x="{left + pw / 2}" y="15" font-size="13" text-anchor="middle">{title}</text>')
    parts.append("</svg>")
    with _open_for_write(path) as f:
        f.write("\n".join(parts) + "\n")


def save_params(params: ParamVector, path) -> None:
    """JSON layout line, then the values as little-endian float64."""
    layout = [[i, name, off, list(shape)] for i, name, off, shape in params.layout]
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "wb") as f:
            f.write(json.dumps(layout, separators=(",", ":")).encode() + b"\n")
            f.write(params.data.astype("<f8").tobytes())
    except OSError as exc:
        raise OSError(f"cannot write checkpoint {path}: {exc}") from exc


def load_params(path) -> ParamVector:
    raw = Path(path).read_bytes()
    head, sep, body = raw.partition(b"\n")
    if not sep:
        raise ValueError(f"{path}: missing layout line")
    layout = tuple((i, name, off, tuple(shape)) for i, name, off, shape in json.loads(head))
    return ParamVector(np.frombuffer(body, dtype="<f8").astype(np.float64), layout)
