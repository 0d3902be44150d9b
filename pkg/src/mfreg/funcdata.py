"""Sampled functional data on a shared grid.

Curves are observed on one equally spaced grid on [0, 1]; integrals are
Riemann sums with uniform weight 1/G. The default grid places the G points at
cell midpoints (g + 1/2)/G so that the weight times the point count is exactly
one and cosine basis functions integrate to zero by symmetry.
"""

from __future__ import annotations

import csv
import json
import re
from dataclasses import dataclass, field

import numpy as np


class ParseError(ValueError):
    """Malformed input file; carries the 1-based row/column when known."""

    def __init__(self, message: str, row: int | None = None, column: str | None = None):
        loc = []
        if row is not None:
            loc.append(f"row {row}")
        if column is not None:
            loc.append(f"column {column}")
        if loc:
            message = f"{message} ({', '.join(loc)})"
        super().__init__(message)
        self.row = row
        self.column = column


@dataclass(frozen=True)
class Grid:
    """Equally spaced sampling grid on [0, 1] with quadrature weight 1/G."""

    points: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        object.__setattr__(self, "points", pts)
        if pts.ndim != 1 or pts.size < 2:
            raise ValueError("grid needs at least two points")
        if not np.all(np.isfinite(pts)):
            raise ValueError("grid points must be finite")
        d = np.diff(pts)
        if np.any(d <= 0):
            raise ValueError("grid points must be strictly increasing")
        if np.max(np.abs(d - d[0])) > 1e-12 * max(1.0, abs(d[0])):
            raise ValueError("grid points must be equally spaced")
        if pts[0] < -1e-12 or pts[-1] > 1 + 1e-12:
            raise ValueError("grid points must lie in [0, 1]")
        pts.flags.writeable = False

    @classmethod
    def uniform(cls, n_points: int) -> "Grid":
        """Midpoint grid (g + 1/2)/G, g = 0..G-1; spacing exactly 1/G."""
        return cls((np.arange(n_points) + 0.5) / n_points)

    @property
    def n_points(self) -> int:
        return self.points.size

    @property
    def weight(self) -> float:
        return 1.0 / self.points.size

    def _check_length(self, f: np.ndarray) -> np.ndarray:
        f = np.asarray(f, dtype=float)
        if f.shape[-1] != self.n_points:
            raise ValueError(
                f"sampled function has {f.shape[-1]} values, grid has {self.n_points} points"
            )
        return f

    def integrate(self, f) -> float:
        """Riemann sum: weight * sum of the sampled values."""
        f = self._check_length(f)
        return float(self.weight * np.sum(f, axis=-1))

    def inner_product(self, f, g) -> float:
        """L2 pairing under the grid quadrature."""
        f = self._check_length(f)
        g = self._check_length(g)
        return float(self.weight * np.dot(f, g))


@dataclass(frozen=True)
class CurveSet:
    """n sampled curves for one functional predictor on a shared Grid."""

    grid: Grid
    values: np.ndarray
    label: str = "x"

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.ndim != 2:
            raise ValueError("values must be an n x G matrix")
        if vals.shape[1] != self.grid.n_points:
            raise ValueError(
                f"curves have {vals.shape[1]} samples, grid has {self.grid.n_points} points"
            )
        if not np.all(np.isfinite(vals)):
            raise ValueError(f"non-finite value in curve set '{self.label}'")
        vals = vals.copy()
        vals.flags.writeable = False
        object.__setattr__(self, "values", vals)

    @property
    def n(self) -> int:
        return self.values.shape[0]


@dataclass(frozen=True)
class ResponseVector:
    """Length-n scalar response."""

    y: np.ndarray

    def __post_init__(self):
        y = np.asarray(self.y, dtype=float)
        if y.ndim != 1:
            raise ValueError("response must be a vector")
        if not np.all(np.isfinite(y)):
            raise ValueError("non-finite response value")
        y = y.copy()
        y.flags.writeable = False
        object.__setattr__(self, "y", y)

    @property
    def n(self) -> int:
        return self.y.size


def center(curves: CurveSet) -> tuple[CurveSet, np.ndarray]:
    """Demean a curve set row-wise; returns (centered curves, mean curve)."""
    if curves.n == 0:
        raise ValueError("cannot center an empty curve set")
    mean = curves.values.mean(axis=0)
    return CurveSet(curves.grid, curves.values - mean, curves.label), mean


def differentiate(curves: CurveSet, order: int) -> CurveSet:
    """Numerical derivative of each curve, returned on the same grid.

    Second-order central differences at interior points, applied repeatedly
    for orders 2 and 3; one-sided second-order stencils at the boundaries.
    """
    if order not in (1, 2, 3):
        raise ValueError(f"derivative order must be 1, 2 or 3, got {order}")
    if curves.grid.n_points < 2 * order + 1:
        raise ValueError("grid too short for the requested derivative order")
    h = float(curves.grid.points[1] - curves.grid.points[0])
    vals = curves.values
    for _ in range(order):
        vals = np.gradient(vals, h, axis=1, edge_order=2)
    return CurveSet(curves.grid, vals, curves.label + "'" * order)


_COLUMN_RE = re.compile(r"^x(\d+)_(\d+)$")


def _parse_header(header: list[str]) -> tuple[int, int, dict[int, list[int]]]:
    """Validate the `y, x<j>_<g>` header; returns (p, G, column map)."""
    if not header or header[0].strip() != "y":
        raise ParseError("first header column must be 'y'", row=1, column=header[0] if header else "")
    by_pred: dict[int, dict[int, int]] = {}
    for col, name in enumerate(header[1:], start=1):
        m = _COLUMN_RE.match(name.strip())
        if m is None:
            raise ParseError(f"unrecognized header column '{name}'", row=1, column=name)
        j, g = int(m.group(1)), int(m.group(2))
        by_pred.setdefault(j, {})[g] = col
    if not by_pred:
        raise ParseError("no predictor columns found", row=1)
    preds = sorted(by_pred)
    if preds != list(range(1, len(preds) + 1)):
        raise ParseError(f"predictor indices must be 1..p, got {preds}", row=1)
    sizes = {j: len(cols) for j, cols in by_pred.items()}
    if len(set(sizes.values())) != 1:
        raise ParseError(f"predictors have unequal grid sizes {sizes}", row=1)
    n_grid = sizes[preds[0]]
    colmap: dict[int, list[int]] = {}
    for j in preds:
        if sorted(by_pred[j]) != list(range(n_grid)):
            raise ParseError(f"grid indices for predictor {j} must be 0..{n_grid - 1}", row=1)
        colmap[j] = [by_pred[j][g] for g in range(n_grid)]
    return len(preds), n_grid, colmap


def load_curves(path, descriptor=None) -> tuple[list[CurveSet], ResponseVector]:
    """Read curves and responses from a CSV file.

    One row per subject; columns `y, x<j>_<g>` with j the predictor index
    (1-based) and g the grid index (0-based). An optional JSON descriptor may
    name predictors (`labels`) and give the physical grid (`grid`); physical
    grids are affinely remapped onto the canonical [0, 1] midpoint grid.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError("empty file", row=1) from None
        p, n_grid, colmap = _parse_header(header)
        width = len(header)
        ys = []
        cells = []
        for row_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != width:
                raise ParseError(
                    f"expected {width} columns, found {len(row)}", row=row_no
                )
            try:
                parsed = [float(c) for c in row]
            except ValueError:
                bad = next(i for i, c in enumerate(row) if not _is_number(c))
                raise ParseError(
                    f"non-numeric cell '{row[bad]}'", row=row_no, column=header[bad]
                ) from None
            ys.append(parsed[0])
            cells.append(parsed)
    if not cells:
        raise ParseError("file contains no data rows", row=2)

    labels = None
    if descriptor is not None:
        with open(descriptor, encoding="utf-8") as fh:
            meta = json.load(fh)
        labels = meta.get("labels")
        if labels is not None and len(labels) != p:
            raise ParseError(f"descriptor names {len(labels)} predictors, file has {p}")
        phys = meta.get("grid")
        if phys is not None and len(phys) != n_grid:
            raise ParseError(f"descriptor grid has {len(phys)} points, file has {n_grid}")

    grid = Grid.uniform(n_grid)
    data = np.asarray(cells)
    curve_sets = []
    for j in range(1, p + 1):
        label = labels[j - 1] if labels else f"x{j}"
        curve_sets.append(CurveSet(grid, data[:, colmap[j]], label))
    return curve_sets, ResponseVector(np.asarray(ys))


def save_curves(path, curves: list[CurveSet], response: ResponseVector) -> None:
    """Write curves and responses in the CSV layout read by load_curves."""
    n = response.n
    for cs in curves:
        if cs.n != n:
            raise ValueError("curve sets and response disagree on n")
    header = ["y"]
    for j, cs in enumerate(curves, start=1):
        header.extend(f"x{j}_{g}" for g in range(cs.grid.n_points))
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for i in range(n):
            row = [repr(float(response.y[i]))]
            for cs in curves:
                row.extend(repr(float(v)) for v in cs.values[i])
            writer.writerow(row)


def _is_number(cell: str) -> bool:
    try:
        float(cell)
        return True
    except ValueError:
        return False
