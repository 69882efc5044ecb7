"""Seeded synthetic tile corpora and the brute-force counting oracle."""
from __future__ import annotations

import math
import os
from dataclasses import dataclass, field

import numpy as np

from .detect_io import DEFAULT_CLASS_NAMES, Detection, GeoDetection, format_label_line
from .geotiff_meta import GeoTransform, TileMeta, parse_filename_center, write_synthetic_geotiff
from .gridder import CountGrid, GridSpec, make_grid
from .projection import ProjectedPoint, mercator_inverse

MASK64 = (1 << 64) - 1
GOLDEN_GAMMA = 0x9E3779B97F4A7C15
BOX_SIZE = 0.01
# keep placements this far (m) from tile and cell edges so label rounding
# can never move a point across an edge
EDGE_MARGIN = 1e-4


class InvalidSpec(ValueError):
    pass


class SplitMix64:
    def __init__(self, seed: int):
        self.state = seed & MASK64

    def next(self) -> int:
        self.state = (self.state + GOLDEN_GAMMA) & MASK64
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
        return z ^ (z >> 31)

    def uniform(self) -> float:
        """Double in [0, 1) from the top 53 bits."""
        return (self.next() >> 11) * (1.0 / (1 << 53))


@dataclass(frozen=True)
class SceneSpec:
    seed: int
    aoi_min: ProjectedPoint
    aoi_max: ProjectedPoint
    cell_size: float = 150.0
    tile_width_px: int = 64
    tile_height_px: int = 64
    pixel_size: tuple[float, float] = (0.5, -0.5)
    objects_per_class: tuple[int, ...] = (0, 0, 0, 0)
    class_names: tuple[str, ...] = DEFAULT_CLASS_NAMES
    band_count: int = 1

    @property
    def tile_size_m(self) -> tuple[float, float]:
        return self.tile_width_px * self.pixel_size[0], self.tile_height_px * -self.pixel_size[1]

    def tile_layout(self) -> tuple[int, int]:
        """(columns, rows) of tiles covering the AOI."""
        if not (self.pixel_size[0] > 0 and self.pixel_size[1] < 0):
            raise InvalidSpec("pixel size must be (+x, -y)")
        if self.tile_width_px < 1 or self.tile_height_px < 1:
            raise InvalidSpec("tiles must be at least 1x1 pixels")
        tw, th = self.tile_size_m
        dx = self.aoi_max.easting - self.aoi_min.easting
        dy = self.aoi_max.northing - self.aoi_min.northing
        if not (dx > 0 and dy > 0):
            raise InvalidSpec("AOI has no extent")
        nx, ny = round(dx / tw), round(dy / th)
        if nx < 1 or ny < 1 or abs(nx * tw - dx) > 1e-6 or abs(ny * th - dy) > 1e-6:
            raise InvalidSpec(f"AOI {dx} x {dy} m is not a whole number of {tw} x {th} m tiles")
        return nx, ny

    def grid_spec(self) -> GridSpec:
        return make_grid(self.aoi_min, self.aoi_max, self.cell_size)


@dataclass
class Scene:
    spec: SceneSpec
    tiles: list[TileMeta]
    labels: dict[str, list[str]]
    truth: list[GeoDetection] = field(default_factory=list)

    def label_text(self, source_id: str) -> str:
        lines = self.labels[source_id]
        return "".join(line + "\n" for line in lines)


def _near_edge(offset: float, period: float) -> bool:
    r = offset / period
    frac = r - math.floor(r)
    return min(frac, 1.0 - frac) * period < EDGE_MARGIN


def _tile_name(meta_transform: GeoTransform) -> str:
    probe = TileMeta("", meta_transform)
    c = probe.center()
    return f"{c.latitude:.6f}_{c.longitude:.6f}.tiff"


def generate_scene(spec: SceneSpec) -> Scene:
    """Place ``objects_per_class`` points uniformly over the AOI.

    Each point is written as a 6-field label line in the tile containing it.
    The output is a pure function of ``spec``.
    """
    if len(spec.objects_per_class) != len(spec.class_names):
        raise InvalidSpec("objects_per_class must have one entry per class")
    if any(n < 0 for n in spec.objects_per_class):
        raise InvalidSpec("object counts must be non-negative")
    if not spec.cell_size > 0:
        raise InvalidSpec("cell_size must be positive")
    nx, ny = spec.tile_layout()
    tw, th = spec.tile_size_m
    min_e, min_n = spec.aoi_min.easting, spec.aoi_min.northing
    max_n = spec.aoi_max.northing
    dx = spec.aoi_max.easting - min_e
    dy = max_n - min_n
    psx, psy = spec.pixel_size

    tiles: list[TileMeta] = []
    grid_of_tiles: list[list[TileMeta]] = []
    for r in range(ny):
        row = []
        for c in range(nx):
            t = GeoTransform(min_e + c * tw, max_n - r * th, psx, psy,
                             spec.tile_width_px, spec.tile_height_px)
            name = _tile_name(t)
            meta = TileMeta(name, t, 3857, parse_filename_center(name), spec.band_count)
            row.append(meta)
            tiles.append(meta)
        grid_of_tiles.append(row)
    if len({t.source_id for t in tiles}) != len(tiles):
        raise InvalidSpec("tiles too small for unique 6-decimal center names")
    labels: dict[str, list[str]] = {t.source_id: [] for t in tiles}

    rng = SplitMix64(spec.seed)
    truth: list[GeoDetection] = []
    for class_id, n_objects in enumerate(spec.objects_per_class):
        for _ in range(n_objects):
            for _attempt in range(10_000):
                e = min_e + rng.uniform() * dx
                n = min_n + rng.uniform() * dy
                if not (_near_edge(e - min_e, tw) or _near_edge(max_n - n, th)
                        or _near_edge(e - min_e, spec.cell_size)
                        or _near_edge(n - min_n, spec.cell_size)):
                    break
            else:
                raise InvalidSpec("could not place a point away from tile/cell edges")
            conf = float(f"{0.3 + 0.7 * rng.uniform():.6f}")
            col = min(int((e - min_e) // tw), nx - 1)
            row = min(int((max_n - n) // th), ny - 1)
            tile = grid_of_tiles[row][col]
            t = tile.transform
            cx = (e - t.origin_easting) / (t.width * t.pixel_size_x)
            cy = (n - t.origin_northing) / (t.height * t.pixel_size_y)
            det = Detection(class_id, cx, cy, BOX_SIZE, BOX_SIZE, conf)
            labels[tile.source_id].append(format_label_line(det, precision=12))
            p = ProjectedPoint(e, n)
            truth.append(GeoDetection(class_id, mercator_inverse(p), p, conf, tile.source_id))
    return Scene(spec, tiles, labels, truth)


def oracle_counts(scene: Scene, spec: GridSpec, conf_threshold: float = 0.25) -> CountGrid:
    """Count truth points per cell by testing every point against every cell.

    Deliberately naive: no floor arithmetic, just interval membership
    ``[edge_k, edge_k+1)`` on both axes for all cells at once.
    """
    names = scene.spec.class_names
    grid = CountGrid.zeros(spec, names, conf_threshold)
    kept = [d for d in scene.truth if d.confidence is None or d.confidence >= conf_threshold]
    grid.below_threshold = len(scene.truth) - len(kept)
    if not kept:
        return grid
    e = np.array([d.projected.easting for d in kept])
    n = np.array([d.projected.northing for d in kept])
    cls = np.array([d.class_id for d in kept])
    cols = np.arange(spec.n_cols)
    rows = np.arange(spec.n_rows)
    west = spec.min_easting + cols * spec.cell_size
    east = spec.min_easting + (cols + 1) * spec.cell_size
    south = spec.min_northing + rows * spec.cell_size
    north = spec.min_northing + (rows + 1) * spec.cell_size
    in_col = (e[:, None] >= west[None, :]) & (e[:, None] < east[None, :])      # (P, C)
    in_row = (n[:, None] >= south[None, :]) & (n[:, None] < north[None, :])    # (P, R)
    member = in_row[:, :, None] & in_col[:, None, :]                          # (P, R, C)
    hits = member.reshape(len(kept), -1).sum(axis=1)
    if np.any(hits > 1):
        raise AssertionError("a point fell in more than one cell")
    grid.skipped = int(np.sum(hits == 0))
    for c in range(len(names)):
        grid.counts[c] = member[cls == c].sum(axis=0)
    return grid


def write_scene(scene: Scene, out_dir: str, fill: int = 0) -> dict[str, str]:
    """Write tiles, labels, class config and truth manifest under ``out_dir``."""
    tiles_dir = os.path.join(out_dir, "tiles")
    labels_dir = os.path.join(out_dir, "labels")
    os.makedirs(tiles_dir, exist_ok=True)
    os.makedirs(labels_dir, exist_ok=True)
    for tile in scene.tiles:
        stem = os.path.splitext(tile.source_id)[0]
        with open(os.path.join(tiles_dir, tile.source_id), "wb") as fh:
            fh.write(write_synthetic_geotiff(tile, fill))
        with open(os.path.join(labels_dir, stem + ".txt"), "w", encoding="utf-8") as fh:
            fh.write(scene.label_text(tile.source_id))
    classes_path = os.path.join(out_dir, "data.yaml")
    with open(classes_path, "w", encoding="utf-8") as fh:
        names = ", ".join(f"'{n}'" for n in scene.spec.class_names)
        fh.write(f"nc: {len(scene.spec.class_names)}\nnames: [{names}]\n")
    truth_path = os.path.join(out_dir, "truth.tsv")
    with open(truth_path, "w", encoding="utf-8") as fh:
        fh.write("class\tlat\tlon\tconf\n")
        for d in scene.truth:
            fh.write(f"{scene.spec.class_names[d.class_id]}\t{d.point.latitude!r}\t"
                     f"{d.point.longitude!r}\t{d.confidence:.6f}\n")
    return {"tiles": tiles_dir, "labels": labels_dir, "classes": classes_path, "truth": truth_path}
