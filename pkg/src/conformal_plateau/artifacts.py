"""Deterministic CSV/JSON writers shared by the CLI and the scripts."""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np

from .geometry import ChartGrid


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


def dumps(obj) -> str:
    return json.dumps(_clean(obj), sort_keys=True, indent=2) + "\n"


def write_json(path: Path, obj) -> None:
    Path(path).write_text(dumps(obj))


def field_rows(grid: ChartGrid, u: np.ndarray, mask: np.ndarray | None = None):
    coords = grid.coords().reshape(grid.dim_n, -1)
    vals = np.asarray(u, dtype=float).reshape(-1)
    keep = np.ones(grid.size, dtype=bool) if mask is None else np.asarray(mask).reshape(-1)
    for k in np.flatnonzero(keep):
        yield [f"{c:.17g}" for c in coords[:, k]] + [f"{vals[k]:.17g}"]


def write_field_csv(path: Path, grid: ChartGrid, u: np.ndarray, mask: np.ndarray | None = None,
                    name: str = "u") -> None:
    """Columns ``x1[, x2], <name>`` in lexicographic node order."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([f"x{i + 1}" for i in range(grid.dim_n)] + [name])
        w.writerows(field_rows(grid, u, mask))


def read_boundary_csv(path: Path, grid: ChartGrid, boundary: np.ndarray) -> np.ndarray:
    """Boundary values from a CSV with columns ``x1[, x2], psi`` in boundary-node order."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ValueError(f"{path}: empty boundary CSV")
    header, body = rows[0], rows[1:]
    n = grid.dim_n
    if len(header) != n + 1:
        raise ValueError(f"{path}: expected {n + 1} columns, got {len(header)}")
    if len(body) != boundary.size:
        raise ValueError(f"{path}: expected {boundary.size} boundary rows, got {len(body)}")
    data = np.array([[float(v) for v in r] for r in body])
    coords = grid.coords().reshape(n, -1)[:, boundary].T
    if not np.allclose(data[:, :n], coords, rtol=0, atol=1e-9):
        raise ValueError(f"{path}: boundary coordinates do not match the model grid")
    return data[:, n]
