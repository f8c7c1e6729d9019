"""CSV + JSON sidecar storage for sampled velocity fields.

The CSV body has header ``x1,x2,x3,u1,u2,u3`` with one row per grid node
in x3-fastest order, written with 17 significant digits so a write/read
cycle reproduces every double bit for bit.  The sidecar
``<path>.meta.json`` records origin, spacing, dims, time, nu and
kernel_order.
"""
import csv
import json
from pathlib import Path

import numpy as np

from nslet.representation import GridSpec, SampledField

HEADER = ["x1", "x2", "x3", "u1", "u2", "u3"]


class FieldFormatError(ValueError):
    """Raised when a field file or its sidecar is malformed."""


def _fmt(v):
    return format(float(v), ".17g")


def meta_path(path):
    return Path(str(path) + ".meta.json")


def emit_field(field, path, kernel_order=0):
    """Write ``field`` to ``path`` and its sidecar; returns the CSV path."""
    path = Path(path)
    pts = field.grid.points()
    vals = field.flat
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(HEADER)
        for p, v in zip(pts, vals):
            w.writerow([_fmt(c) for c in p] + [_fmt(c) for c in v])
    meta = {
        "origin": [float(c) for c in field.grid.origin],
        "spacing": [float(c) for c in field.grid.spacing],
        "dims": [int(c) for c in field.grid.dims],
        "time": float(field.time),
        "nu": None if field.nu is None else float(field.nu),
        "kernel_order": int(kernel_order),
    }
    meta_path(path).write_text(json.dumps(meta, sort_keys=True, indent=2) + "\n")
    return path


def load_field(path):
    """Read a field written by :func:`emit_field`; returns (SampledField, meta)."""
    path = Path(path)
    try:
        meta = json.loads(meta_path(path).read_text())
        grid = GridSpec(tuple(meta["origin"]), tuple(meta["spacing"]), tuple(int(d) for d in meta["dims"]))
    except (KeyError, TypeError, json.JSONDecodeError) as exc:
        raise FieldFormatError(f"{meta_path(path)}: bad sidecar ({exc})") from exc
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0] != HEADER:
        raise FieldFormatError(f"{path}:1: expected header {','.join(HEADER)}")
    body = rows[1:]
    if len(body) != grid.size:
        raise FieldFormatError(f"{path}: {len(body)} data rows, grid dims {grid.dims} need {grid.size}")
    try:
        data = np.array([[float(c) for c in r] for r in body], dtype=float).reshape(len(body), 6)
    except ValueError as exc:
        raise FieldFormatError(f"{path}: non-numeric or short row ({exc})") from exc
    values = data[:, 3:].reshape(grid.dims + (3,))
    nu = meta.get("nu")
    field = SampledField(grid, values, float(meta["time"]), None if nu is None else float(nu))
    return field, meta
