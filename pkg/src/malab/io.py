"""Portable field files and report writers.

A field ``name`` is stored as ``name.f64`` (raw little-endian float64,
row-major) next to ``name.json`` describing the grid.  Reading a field back
reproduces every value bit for bit.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
from pathlib import Path

import numpy as np

from .exceptions import FieldFormatError, GridError
from .grid import BoxGrid, PeriodicGrid, ScalarField

FORMAT = "malab-field-1"


def _grid_meta(grid) -> dict:
    if isinstance(grid, BoxGrid):
        return {
            "kind": "box",
            "dim": grid.dim,
            "half_width": grid.half_width,
            "nodes_per_axis": grid.nodes_per_axis,
            "dims": list(grid.shape),
            "spacing": list(grid.spacings),
            "origin": [-grid.half_width] * grid.dim,
        }
    if isinstance(grid, PeriodicGrid):
        return {
            "kind": "periodic",
            "dim": grid.dim,
            "periods": list(grid.periods),
            "nodes": list(grid.nodes),
            "dims": list(grid.shape),
            "spacing": list(grid.spacings),
            "origin": [0.0] * grid.dim,
        }
    raise GridError(f"cannot serialize grid of type {type(grid).__name__}")


def _grid_from_meta(meta: dict):
    if meta["kind"] == "box":
        return BoxGrid(int(meta["dim"]), float(meta["half_width"]), int(meta["nodes_per_axis"]))
    if meta["kind"] == "periodic":
        return PeriodicGrid(int(meta["dim"]), tuple(meta["periods"]), tuple(meta["nodes"]))
    raise GridError(f"unknown grid kind {meta['kind']!r}")


def write_field(field: ScalarField, path, extra: dict = None) -> Path:
    """Write ``path.f64`` and ``path.json``; returns the sidecar path."""
    path = Path(path)
    base = path.with_suffix("") if path.suffix in (".f64", ".json") else path
    raw = base.with_suffix(".f64")
    meta = _grid_meta(field.grid)
    meta.update({"format": FORMAT, "dtype": "<f8", "order": "row-major", "file": raw.name})
    if extra:
        meta["extra"] = extra
    field.values.astype("<f8", copy=False).tofile(raw)
    side = base.with_suffix(".json")
    side.write_text(json.dumps(meta, indent=2) + "\n")
    return side


def read_field(path) -> ScalarField:
    path = Path(path)
    base = path.with_suffix("") if path.suffix in (".f64", ".json") else path
    try:
        meta = json.loads(base.with_suffix(".json").read_text())
    except (OSError, ValueError) as exc:
        raise FieldFormatError(f"{base}: cannot read sidecar: {exc}") from exc
    if meta.get("format") != FORMAT or meta.get("dtype") != "<f8" or meta.get("order") != "row-major":
        raise FieldFormatError(f"{base}: unsupported field format")
    grid = _grid_from_meta(meta)
    try:
        values = np.fromfile(base.parent / meta["file"], dtype="<f8")
    except OSError as exc:
        raise FieldFormatError(f"{base}: cannot read values: {exc}") from exc
    if values.size != grid.size:
        raise FieldFormatError(f"{base}: expected {grid.size} values, found {values.size}")
    return ScalarField(grid, values.reshape(meta["dims"]).astype(float))


def jsonable(obj):
    """Recursively convert numpy scalars/arrays and non-finite floats for JSON."""
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return jsonable(obj.tolist())
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return x
    return obj


def write_json(obj, path) -> Path:
    path = Path(path)
    path.write_text(json.dumps(jsonable(obj), indent=2, sort_keys=False) + "\n")
    return path


def write_csv(rows, path, columns=None) -> Path:
    """Write a list of dicts; column order follows ``columns`` or first row."""
    path = Path(path)
    rows = [jsonable(r) for r in rows]
    if columns is None:
        columns = []
        for r in rows:
            for k in r:
                if k not in columns:
                    columns.append(k)
    with path.open("w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=columns)
        w.writeheader()
        for r in rows:
            w.writerow({k: r.get(k, "") for k in columns})
    return path


def read_csv(path) -> list:
    with Path(path).open(newline="") as fh:
        return list(csv.DictReader(fh))


def config_hash(config: dict) -> str:
    """SHA-256 of the canonical JSON form of a resolved config."""
    blob = json.dumps(jsonable(config), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()
