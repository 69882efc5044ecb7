"""Analysis grid in projected meters and per-class count accumulation."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .detect_io import ClassMap, GeoDetection
from .projection import ProjectedPoint, inverse_arrays

DEFAULT_CELL_SIZE = 150.0
DEFAULT_CONF_THRESHOLD = 0.25


class DegenerateAoi(ValueError):
    pass


class SpecMismatch(ValueError):
    pass


@dataclass(frozen=True)
class GridSpec:
    min_easting: float
    min_northing: float
    cell_size: float = DEFAULT_CELL_SIZE
    n_cols: int = 1
    n_rows: int = 1

    def __post_init__(self):
        if not (self.cell_size > 0 and math.isfinite(self.cell_size)):
            raise ValueError(f"cell_size must be positive, got {self.cell_size}")
        if self.n_cols < 1 or self.n_rows < 1:
            raise ValueError(f"grid must be at least 1x1, got {self.n_rows}x{self.n_cols}")

    def col_edge(self, j):
        """Western edge of column ``j`` (``j = n_cols`` is the eastern bound)."""
        return self.min_easting + j * self.cell_size

    def row_edge(self, i):
        return self.min_northing + i * self.cell_size

    @property
    def max_easting(self) -> float:
        return self.col_edge(self.n_cols)

    @property
    def max_northing(self) -> float:
        return self.row_edge(self.n_rows)


def make_grid(aoi_min: ProjectedPoint, aoi_max: ProjectedPoint,
              cell_size: float = DEFAULT_CELL_SIZE) -> GridSpec:
    dx = aoi_max.easting - aoi_min.easting
    dy = aoi_max.northing - aoi_min.northing
    if not (dx > 0 and dy > 0):
        raise DegenerateAoi(f"AOI extent {dx} x {dy} m is not positive")
    if not cell_size > 0:
        raise DegenerateAoi(f"cell_size must be positive, got {cell_size}")
    n_cols = math.ceil(dx / cell_size)
    n_rows = math.ceil(dy / cell_size)
    spec = GridSpec(aoi_min.easting, aoi_min.northing, cell_size, n_cols, n_rows)
    # guard the ceil against rounding that leaves the far edge uncovered
    if spec.max_easting < aoi_max.easting:
        spec = GridSpec(spec.min_easting, spec.min_northing, cell_size, n_cols + 1, n_rows)
    if spec.max_northing < aoi_max.northing:
        spec = GridSpec(spec.min_easting, spec.min_northing, cell_size, spec.n_cols, n_rows + 1)
    return spec


def _locate(value: float, lo: float, cell: float, n: int) -> int | None:
    # floor() can be off by one near an edge; settle against the edges
    # themselves so that the partition is exactly [edge(k), edge(k+1))
    if not value >= lo:
        return None
    k = math.floor((value - lo) / cell)
    if k > 0 and value < lo + k * cell:
        k -= 1
    elif value >= lo + (k + 1) * cell:
        k += 1
    return k if 0 <= k < n else None


def assign_cell(spec: GridSpec, p: ProjectedPoint) -> tuple[int, int] | None:
    """``(row, col)`` of the cell holding ``p``, or ``None`` when outside the grid.

    Cells are half-open, low edge inclusive: a point on a shared edge goes
    to the higher-index cell, and the max edges are outside.
    """
    col = _locate(p.easting, spec.min_easting, spec.cell_size, spec.n_cols)
    if col is None:
        return None
    row = _locate(p.northing, spec.min_northing, spec.cell_size, spec.n_rows)
    if row is None:
        return None
    return row, col


def assign_cells(spec: GridSpec, easting, northing) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Vectorised :func:`assign_cell`: returns (row, col, inside-mask)."""
    def locate(v, lo, cell, n):
        k = np.floor((v - lo) / cell)
        k = np.where((k > 0) & (v < lo + k * cell), k - 1, k)
        k = np.where(v >= lo + (k + 1) * cell, k + 1, k)
        inside = (v >= lo) & (k >= 0) & (k < n)
        return np.where(inside, k, 0).astype(np.int64), inside

    col, in_c = locate(np.asarray(easting, float), spec.min_easting, spec.cell_size, spec.n_cols)
    row, in_r = locate(np.asarray(northing, float), spec.min_northing, spec.cell_size, spec.n_rows)
    return row, col, in_c & in_r


@dataclass
class CountGrid:
    spec: GridSpec
    class_names: tuple[str, ...]
    counts: np.ndarray  # (n_classes, n_rows, n_cols) int64
    conf_threshold: float = DEFAULT_CONF_THRESHOLD
    skipped: int = 0
    below_threshold: int = 0

    @classmethod
    def zeros(cls, spec: GridSpec, class_names, conf_threshold=DEFAULT_CONF_THRESHOLD):
        class_names = tuple(class_names)
        counts = np.zeros((len(class_names), spec.n_rows, spec.n_cols), dtype=np.int64)
        return cls(spec, class_names, counts, conf_threshold)

    @property
    def accepted(self) -> int:
        return int(self.counts.sum())

    def plane(self, name: str) -> np.ndarray:
        if name == "total":
            return self.counts.sum(axis=0)
        return self.counts[self.class_names.index(name)]

    def same_counts(self, other: "CountGrid") -> bool:
        return (self.spec == other.spec and self.class_names == other.class_names
                and np.array_equal(self.counts, other.counts))

    def __eq__(self, other):
        if not isinstance(other, CountGrid):
            return NotImplemented
        return (self.same_counts(other) and self.conf_threshold == other.conf_threshold
                and self.skipped == other.skipped
                and self.below_threshold == other.below_threshold)


def accumulate_into(grid: CountGrid, dets: list[GeoDetection]) -> CountGrid:
    """Add detections to ``grid`` in place, under its own spec and threshold.

    Detections without a confidence are always accepted. Out-of-grid
    detections go to ``skipped``; sub-threshold ones to ``below_threshold``.
    """
    spec, counts, threshold = grid.spec, grid.counts, grid.conf_threshold
    for d in dets:
        if d.confidence is not None and d.confidence < threshold:
            grid.below_threshold += 1
            continue
        cell = assign_cell(spec, d.projected)
        if cell is None:
            grid.skipped += 1
            continue
        counts[d.class_id, cell[0], cell[1]] += 1
    return grid


def accumulate(spec: GridSpec, dets: list[GeoDetection], cm: ClassMap,
               conf_threshold: float = DEFAULT_CONF_THRESHOLD) -> CountGrid:
    """Bin detections into a fresh per-class CountGrid."""
    return accumulate_into(CountGrid.zeros(spec, cm.names, conf_threshold), dets)


def merge(a: CountGrid, b: CountGrid) -> CountGrid:
    if a.spec != b.spec:
        raise SpecMismatch(f"grids differ: {a.spec} vs {b.spec}")
    if a.class_names != b.class_names:
        raise SpecMismatch(f"class order differs: {a.class_names} vs {b.class_names}")
    if a.conf_threshold != b.conf_threshold:
        raise SpecMismatch("grids were accumulated at different thresholds")
    return CountGrid(a.spec, a.class_names, a.counts + b.counts, a.conf_threshold,
                     a.skipped + b.skipped, a.below_threshold + b.below_threshold)


def cell_centers(spec: GridSpec) -> tuple[np.ndarray, np.ndarray]:
    """Latitudes per row and longitudes per column, both ascending."""
    north = spec.min_northing + (np.arange(spec.n_rows) + 0.5) * spec.cell_size
    east = spec.min_easting + (np.arange(spec.n_cols) + 0.5) * spec.cell_size
    mid_e = spec.min_easting + spec.n_cols * spec.cell_size / 2.0
    mid_n = spec.min_northing + spec.n_rows * spec.cell_size / 2.0
    lat, _ = inverse_arrays(np.full_like(north, mid_e), north)
    _, lon = inverse_arrays(east, np.full_like(east, mid_n))
    return lat, lon
