"""Tile-batch orchestration: scanning, manifests, and parallel gridding.

Work fans out over contiguous chunks of tiles; each chunk yields a partial
:class:`CountGrid` and tallies, reduced with :func:`gridder.merge`. Since
merge is a commutative monoid the result does not depend on worker count.
"""
from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields

from .detect_io import ClassMap, detections_to_geo, pair_labels, parse_yolo_labels_lenient
from .geotiff_meta import GeoTiffError, GeoTransform, TileMeta, filename_center_or_none, read_tile
from .gridder import CountGrid, GridSpec, accumulate_into, make_grid, merge
from .projection import ProjectedPoint

TILE_SUFFIXES = (".tif", ".tiff")
MANIFEST_COLUMNS = ("tile_path", "label_path", "status", "width", "height", "origin_easting",
                    "origin_northing", "pixel_size_x", "pixel_size_y", "epsg", "bands", "error")


@dataclass
class ManifestEntry:
    tile_path: str
    label_path: str | None
    status: str  # ok | no-labels | parse-error
    meta: TileMeta | None = None
    error: str = ""


@dataclass
class Tally:
    tiles: int = 0
    bad_tiles: int = 0
    label_lines: int = 0
    accepted: int = 0
    skipped: int = 0
    below_threshold: int = 0
    parse_errors: int = 0
    errors: list[str] = field(default_factory=list)

    def __add__(self, other: "Tally") -> "Tally":
        out = Tally()
        for f in fields(Tally):
            setattr(out, f.name, getattr(self, f.name) + getattr(other, f.name))
        return out


def find_tiles(tiles_dir: str) -> list[str]:
    found = []
    for root, dirs, files in os.walk(tiles_dir):
        dirs.sort()
        for name in sorted(files):
            if name.lower().endswith(TILE_SUFFIXES):
                found.append(os.path.join(root, name))
    return found


def _chunks(items: list, n_chunks: int) -> list[list]:
    n_chunks = max(1, min(n_chunks, len(items)))
    size, extra = divmod(len(items), n_chunks)
    out, start = [], 0
    for i in range(n_chunks):
        stop = start + size + (1 if i < extra else 0)
        out.append(items[start:stop])
        start = stop
    return out


def _fan_out(fn, chunks: list, workers: int) -> list:
    if workers <= 1 or len(chunks) <= 1:
        return [fn(c) for c in chunks]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, chunks))


def _scan_chunk(pairs: list[tuple[str, str | None]]) -> list[ManifestEntry]:
    out = []
    for tile_path, label_path in pairs:
        try:
            meta = read_tile(tile_path)
        except (GeoTiffError, OSError) as exc:
            out.append(ManifestEntry(tile_path, label_path, "parse-error", None, str(exc)))
            continue
        status = "ok" if label_path is not None else "no-labels"
        out.append(ManifestEntry(tile_path, label_path, status, meta))
    return out


def scan(tiles_dir: str, labels_dir: str | None = None, pairs_file: str | None = None,
         workers: int = 1) -> list[ManifestEntry]:
    tiles = find_tiles(tiles_dir)
    pairing = pair_labels(tiles, labels_dir, pairs_file)
    items = [(t, pairing[t]) for t in tiles]
    chunks = _chunks(items, 4 * workers)
    return [e for part in _fan_out(_scan_chunk, chunks, workers) for e in part]


def write_manifest(entries: list[ManifestEntry], path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\t".join(MANIFEST_COLUMNS) + "\n")
        for e in entries:
            if e.meta is not None:
                t = e.meta.transform
                geo = [str(t.width), str(t.height), repr(t.origin_easting), repr(t.origin_northing),
                       repr(t.pixel_size_x), repr(t.pixel_size_y), str(e.meta.crs_epsg),
                       str(e.meta.band_count)]
            else:
                geo = [""] * 8
            err = e.error.replace("\t", " ").replace("\n", " ")
            fh.write("\t".join([e.tile_path, e.label_path or "", e.status] + geo + [err]) + "\n")


def read_manifest(path: str) -> list[ManifestEntry]:
    entries = []
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().rstrip("\n").split("\t")
        if tuple(header) != MANIFEST_COLUMNS:
            raise ValueError(f"{path} is not a gridvec manifest")
        for lineno, line in enumerate(fh, start=2):
            cols = line.rstrip("\n").split("\t")
            if len(cols) != len(MANIFEST_COLUMNS):
                raise ValueError(f"{path}:{lineno}: expected {len(MANIFEST_COLUMNS)} columns")
            tile, label, status = cols[:3]
            meta = None
            if cols[3]:
                t = GeoTransform(float(cols[5]), float(cols[6]), float(cols[7]), float(cols[8]),
                                 int(cols[3]), int(cols[4]))
                meta = TileMeta(tile, t, int(cols[9]), filename_center_or_none(tile), int(cols[10]))
            entries.append(ManifestEntry(tile, label or None, status, meta, cols[11]))
    return entries


def aoi_from_tiles(entries: list[ManifestEntry], cell_size: float) -> GridSpec:
    """Union of parsed tile footprints, extended up to whole cells."""
    extents = [e.meta.transform.extent for e in entries if e.meta is not None]
    if not extents:
        raise ValueError("no parsed tiles to derive an AOI from")
    lo = ProjectedPoint(min(x[0] for x in extents), min(x[1] for x in extents))
    hi = ProjectedPoint(max(x[2] for x in extents), max(x[3] for x in extents))
    return make_grid(lo, hi, cell_size)


def _count_lines(path: str | None) -> int:
    if path is None:
        return 0
    try:
        with open(path, encoding="utf-8") as fh:
            return sum(1 for line in fh if line.strip())
    except (OSError, UnicodeDecodeError):
        return 0


@dataclass(frozen=True)
class _GridJob:
    spec: GridSpec
    classes: ClassMap
    conf_threshold: float


def _grid_chunk(args) -> tuple[CountGrid, Tally]:
    job, entries = args
    grid = CountGrid.zeros(job.spec, job.classes.names, job.conf_threshold)
    tally = Tally()
    for e in entries:
        tally.tiles += 1
        if e.status == "parse-error" or e.meta is None:
            n = _count_lines(e.label_path)
            tally.bad_tiles += 1
            tally.label_lines += n
            tally.parse_errors += n
            tally.errors.append(f"{e.tile_path}: tile metadata unreadable ({e.error})")
            continue
        if e.label_path is None:
            continue
        try:
            with open(e.label_path, encoding="utf-8") as fh:
                text = fh.read()
        except (OSError, UnicodeDecodeError) as exc:
            tally.bad_tiles += 1
            tally.errors.append(f"{e.label_path}: {exc}")
            continue
        dets, errors = parse_yolo_labels_lenient(text, job.classes)
        n_lines = len(dets) + len(errors)
        tally.label_lines += n_lines
        if errors:
            tally.bad_tiles += 1
            tally.parse_errors += n_lines
            tally.errors.extend(f"{e.label_path}: {err}" for err in errors)
            continue
        accumulate_into(grid, detections_to_geo(dets, e.meta))
    tally.accepted = grid.accepted
    tally.skipped = grid.skipped
    tally.below_threshold = grid.below_threshold
    return grid, tally


def grid_entries(entries: list[ManifestEntry], spec: GridSpec, classes: ClassMap,
                 conf_threshold: float = 0.25, workers: int = 1) -> tuple[CountGrid, Tally]:
    job = _GridJob(spec, classes, conf_threshold)
    chunks = _chunks(entries, 4 * workers) if entries else [[]]
    results = _fan_out(_grid_chunk, [(job, c) for c in chunks], workers)
    grid, tally = results[0]
    for g, t in results[1:]:
        grid = merge(grid, g)
        tally = tally + t
    return grid, tally


def format_report(tally: Tally, grid: CountGrid) -> str:
    lines = [
        f"tiles\t{tally.tiles}",
        f"bad_tiles\t{tally.bad_tiles}",
        f"label_lines\t{tally.label_lines}",
        f"accepted\t{tally.accepted}",
        f"skipped_out_of_grid\t{tally.skipped}",
        f"below_threshold\t{tally.below_threshold}",
        f"parse_errors\t{tally.parse_errors}",
        f"conf_threshold\t{grid.conf_threshold}",
        f"grid\t{grid.spec.n_rows}x{grid.spec.n_cols} cells of {grid.spec.cell_size} m",
    ]
    for name in grid.class_names:
        lines.append(f"count_{name}\t{int(grid.plane(name).sum())}")
    lines += [f"error\t{msg}" for msg in tally.errors]
    return "\n".join(lines) + "\n"
