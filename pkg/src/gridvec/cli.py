"""``gridvec`` command line: scan, grid, emit, render, eval, synth, validate.

Exit codes: 0 success, 1 validation failure, 2 missing or empty inputs,
3 pipeline data error, 4 configuration error.
"""
from __future__ import annotations

import argparse
import os
import sys
from datetime import datetime, timezone

import numpy as np

from . import __version__
from .detect_io import ClassMap, ConfigError, MalformedLabel, parse_class_config, parse_yolo_labels
from .evalkit import LabeledBox, confusion_matrix, f1_confidence_curve, match_detections, peak_f1
from .geotiff_meta import GeoTiffError, read_tile, validate_tile
from .gridder import DegenerateAoi, make_grid
from .inventory import (FactorError, counts_to_emissions, grid_from_dataset, inventory_dataset,
                        load_emission_factors)
from .netcdf import NetCDFError, read_netcdf, write_netcdf
from .pipeline import (aoi_from_tiles, find_tiles, format_report, grid_entries, read_manifest, scan,
                       write_manifest)
from .projection import ProjectedPoint, format_dms, mercator_inverse, pixel_to_projected
from .render import UnknownPlane, encode_ppm, render_curve, render_heatmap
from .synth import InvalidSpec, SceneSpec, generate_scene, write_scene

EXIT_OK, EXIT_INVALID, EXIT_MISSING, EXIT_DATA, EXIT_CONFIG = 0, 1, 2, 3, 4

DEFAULT_SYNTH_AOI = "8585989.719322871,3316980.858127291,8586629.719322871,3317620.858127291"


class CliError(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


def _fail(code: int, message: str):
    raise CliError(code, message)


def _timestamp(args) -> str:
    return args.timestamp or datetime.now(timezone.utc).isoformat(timespec="seconds")


def _load_classes(path: str | None) -> ClassMap:
    if path is None:
        return ClassMap()
    if not os.path.isfile(path):
        _fail(EXIT_MISSING, f"class config {path} not found")
    try:
        with open(path, encoding="utf-8") as fh:
            return parse_class_config(fh.read())
    except ConfigError as exc:
        _fail(EXIT_CONFIG, f"{path}: {exc}")


def _parse_floats(text: str, n: int, what: str) -> list[float]:
    try:
        values = [float(v) for v in text.split(",")]
    except ValueError:
        values = []
    if len(values) != n:
        _fail(EXIT_CONFIG, f"{what} needs {n} comma-separated numbers, got {text!r}")
    return values


def _write(path: str, data: bytes | str) -> None:
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    mode = "wb" if isinstance(data, bytes) else "w"
    with open(path, mode) as fh:
        fh.write(data)


def cmd_scan(args) -> int:
    if not args.tiles or not os.path.isdir(args.tiles):
        _fail(EXIT_MISSING, f"tiles directory {args.tiles} not found")
    entries = scan(args.tiles, args.labels, args.pairs, args.workers)
    os.makedirs(args.out, exist_ok=True)
    write_manifest(entries, os.path.join(args.out, "manifest.tsv"))
    n_ok = sum(e.status == "ok" for e in entries)
    print(f"{len(entries)} tiles, {n_ok} ok")
    return EXIT_OK if n_ok else EXIT_MISSING


def cmd_grid(args) -> int:
    classes = _load_classes(args.classes)
    manifest = args.manifest or os.path.join(args.out, "manifest.tsv")
    if args.manifest or (not args.tiles and os.path.isfile(manifest)):
        if not os.path.isfile(manifest):
            _fail(EXIT_MISSING, f"manifest {manifest} not found")
        entries = read_manifest(manifest)
    else:
        if not args.tiles or not os.path.isdir(args.tiles):
            _fail(EXIT_MISSING, f"tiles directory {args.tiles} not found")
        entries = scan(args.tiles, args.labels, args.pairs, args.workers)
    if not any(e.status == "ok" for e in entries):
        _fail(EXIT_MISSING, "no tiles with labels to grid")

    try:
        if args.aoi == "from-tiles":
            spec = aoi_from_tiles(entries, args.cell_size)
        else:
            e0, n0, e1, n1 = _parse_floats(args.aoi, 4, "--aoi")
            spec = make_grid(ProjectedPoint(e0, n0), ProjectedPoint(e1, n1), args.cell_size)
    except (DegenerateAoi, ValueError) as exc:
        _fail(EXIT_CONFIG, f"bad AOI: {exc}")

    grid, tally = grid_entries(entries, spec, classes, args.conf, args.workers)
    os.makedirs(args.out, exist_ok=True)
    _write(os.path.join(args.out, "report.txt"), format_report(tally, grid))
    if tally.bad_tiles and not args.skip_bad:
        for msg in tally.errors[:10]:
            print(msg, file=sys.stderr)
        _fail(EXIT_DATA, f"{tally.bad_tiles} tile(s) failed; rerun with --skip-bad to continue past them")
    ds = inventory_dataset(grid, _timestamp(args))
    _write(os.path.join(args.out, "counts.nc"), write_netcdf(ds))
    print(f"accepted={tally.accepted} skipped={tally.skipped} "
          f"below_threshold={tally.below_threshold} parse_errors={tally.parse_errors}")
    return EXIT_OK


def _read_counts(path: str):
    if not os.path.isfile(path):
        _fail(EXIT_MISSING, f"{path} not found")
    with open(path, "rb") as fh:
        data = fh.read()
    try:
        return grid_from_dataset(read_netcdf(data))
    except (NetCDFError, ValueError) as exc:
        _fail(EXIT_DATA, f"{path}: {exc}")


def cmd_emit(args) -> int:
    counts_path = args.counts or os.path.join(args.out, "counts.nc")
    if not args.factors:
        _fail(EXIT_CONFIG, "emit needs --factors")
    if not os.path.isfile(args.factors):
        _fail(EXIT_CONFIG, f"factor file {args.factors} not found")
    grid = _read_counts(counts_path)
    try:
        with open(args.factors, encoding="utf-8") as fh:
            table = load_emission_factors(fh.read(), ClassMap(grid.class_names))
    except FactorError as exc:
        _fail(EXIT_CONFIG, f"{args.factors}: {exc}")
    emissions = counts_to_emissions(grid, table)
    ds = inventory_dataset(grid, _timestamp(args), emissions, table.unit)
    _write(os.path.join(args.out, "emissions.nc"), write_netcdf(ds))
    return EXIT_OK


def cmd_render(args) -> int:
    counts_path = args.counts or os.path.join(args.out, "counts.nc")
    grid = _read_counts(counts_path)
    if args.cell_px < 1:
        _fail(EXIT_CONFIG, "--cell-px must be >= 1")
    try:
        img = render_heatmap(grid, args.plane, args.cell_px)
    except UnknownPlane:
        _fail(EXIT_CONFIG, f"unknown plane {args.plane!r}; choose total or one of {list(grid.class_names)}")
    _write(os.path.join(args.out, f"heatmap_{args.plane}.ppm"), encode_ppm(img))
    return EXIT_OK


def _label_files(folder: str) -> dict[str, str]:
    return {os.path.splitext(n)[0]: os.path.join(folder, n)
            for n in sorted(os.listdir(folder)) if n.endswith(".txt")}


def cmd_eval(args) -> int:
    for d in (args.gt, args.pred):
        if not d or not os.path.isdir(d):
            _fail(EXIT_MISSING, f"directory {d} not found")
    classes = _load_classes(args.classes)
    gt_files, pred_files = _label_files(args.gt), _label_files(args.pred)
    images = sorted(set(gt_files) & set(pred_files))
    if not images:
        _fail(EXIT_MISSING, "no ground-truth/prediction pairs share a basename")
    gt_by_image, preds_by_image = {}, {}
    try:
        for image in images:
            with open(gt_files[image], encoding="utf-8") as fh:
                gt_by_image[image] = [LabeledBox(d.class_id, d.cx, d.cy, d.w, d.h)
                                      for d in parse_yolo_labels(fh.read(), classes)]
            with open(pred_files[image], encoding="utf-8") as fh:
                preds_by_image[image] = [LabeledBox.from_detection(d)
                                         for d in parse_yolo_labels(fh.read(), classes)]
    except MalformedLabel as exc:
        _fail(EXIT_DATA, f"{image}: {exc}")

    nc = classes.nc
    curve = f1_confidence_curve(gt_by_image, preds_by_image, nc, args.iou)
    conf, f1 = peak_f1(curve)
    cm = np.zeros((nc + 1, nc + 1), dtype=np.int64)
    for image in images:
        preds = [p for p in preds_by_image[image] if p.confidence is None or p.confidence >= args.conf]
        cm += confusion_matrix(match_detections(gt_by_image[image], preds, args.iou), nc)

    os.makedirs(args.out, exist_ok=True)
    header = "threshold\t" + "\t".join(f"f1_{n}" for n in classes.names) + "\tf1_all\tprecision\trecall"
    rows = [header]
    for i, t in enumerate(curve.thresholds):
        vals = [f"{v:.6f}" for v in curve.per_class[i]]
        rows.append(f"{t:.3f}\t" + "\t".join(vals)
                    + f"\t{curve.overall[i]:.6f}\t{curve.precision[i]:.6f}\t{curve.recall[i]:.6f}")
    _write(os.path.join(args.out, "metrics.tsv"), "\n".join(rows) + "\n")

    labels = list(classes.names) + ["background"]
    cm_rows = ["predicted\\true\t" + "\t".join(labels)]
    for i, name in enumerate(labels):
        cm_rows.append(name + "\t" + "\t".join(str(v) for v in cm[i]))
    _write(os.path.join(args.out, "confusion.tsv"), "\n".join(cm_rows) + "\n")

    peak_line = f"peak_f1={f1:.3f} at conf={conf:.3f}"
    _write(os.path.join(args.out, "report.txt"),
           f"{peak_line}\nimages={len(images)}\niou_min={args.iou}\nconfusion_conf={args.conf}\n")
    series = [curve.per_class[:, c] for c in range(nc)] + [curve.overall]
    _write(os.path.join(args.out, "f1_curve.ppm"), encode_ppm(render_curve(curve.thresholds, series)))
    print(peak_line)
    return EXIT_OK


def cmd_synth(args) -> int:
    e0, n0, e1, n1 = _parse_floats(args.aoi or DEFAULT_SYNTH_AOI, 4, "--aoi")
    w, h = (int(v) for v in _parse_floats(args.tile_px, 2, "--tile-px"))
    psize = _parse_floats(args.pixel_size, 1, "--pixel-size")[0]
    classes = _load_classes(args.classes)
    try:
        objects = tuple(int(v) for v in args.objects.split(","))
    except ValueError:
        _fail(EXIT_CONFIG, f"--objects must be comma-separated integers, got {args.objects!r}")
    spec = SceneSpec(args.seed, ProjectedPoint(e0, n0), ProjectedPoint(e1, n1), args.cell_size,
                     w, h, (psize, -psize), objects, classes.names, args.bands)
    try:
        scene = generate_scene(spec)
    except InvalidSpec as exc:
        _fail(EXIT_CONFIG, str(exc))
    paths = write_scene(scene, args.out)
    print(f"{len(scene.tiles)} tiles, {len(scene.truth)} objects -> {paths['tiles']}")
    return EXIT_OK


CORNERS = (("Upper Left", 0, 0), ("Lower Left", 0, 1), ("Upper Right", 1, 0),
           ("Lower Right", 1, 1), ("Center", 0.5, 0.5))


def describe_tile(meta, report) -> str:
    """gdalinfo-style summary of one tile plus its validation checks."""
    t = meta.transform
    lines = [
        f"Files: {os.path.basename(meta.source_id)}",
        f"Size is {t.width}, {t.height}",
        f"Coordinate System is EPSG:{meta.crs_epsg}",
        f"Origin = ({t.origin_easting:.15f},{t.origin_northing:.15f})",
        f"Pixel Size = ({t.pixel_size_x:.15f},{t.pixel_size_y:.15f})",
        "Corner Coordinates:",
    ]
    for label, fx, fy in CORNERS:
        p = pixel_to_projected(t, fx * t.width, fy * t.height)
        g = mercator_inverse(p)
        lines.append(f"{label:<12}({p.easting:12.3f},{p.northing:12.3f}) "
                     f"({format_dms(g.longitude, 'lon', pad=True)}, "
                     f"{format_dms(g.latitude, 'lat', pad=True)})")
    lines.append(f"Bands: {meta.band_count}")
    for check in report.checks:
        delta = f" delta={check.delta:.3g}" if check.delta is not None else ""
        lines.append(f"Check {check.name}: {check.status}{delta} {check.detail}".rstrip())
    return "\n".join(lines)


def cmd_validate(args) -> int:
    if not args.tiles or not os.path.isdir(args.tiles):
        _fail(EXIT_MISSING, f"tiles directory {args.tiles} not found")
    tiles = find_tiles(args.tiles)
    if not tiles:
        _fail(EXIT_MISSING, f"no .tif/.tiff files under {args.tiles}")
    all_ok = True
    for path in tiles:
        try:
            meta = read_tile(path)
        except (GeoTiffError, OSError) as exc:
            print(f"Files: {os.path.basename(path)}\nCheck parse: fail {exc}\n")
            all_ok = False
            continue
        report = validate_tile(meta, args.tolerance)
        all_ok &= report.ok
        print(describe_tile(meta, report) + "\n")
    return EXIT_OK if all_ok else EXIT_INVALID


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gridvec", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"gridvec {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, *flags):
        p.add_argument("--out", default=".", help="output directory")
        if "tiles" in flags:
            p.add_argument("--tiles", help="directory of GeoTIFF tiles")
            p.add_argument("--labels", help="directory of label files (default: beside tiles)")
            p.add_argument("--pairs", help="tab-separated tile<TAB>label override file")
        if "workers" in flags:
            p.add_argument("--workers", type=int, default=int(os.environ.get("GRIDVEC_WORKERS", "1")))
        if "classes" in flags:
            p.add_argument("--classes", help="class config (nc/names); default is the 4-class map")
        if "timestamp" in flags:
            p.add_argument("--timestamp", help="creation timestamp written to outputs (default: now)")

    p = sub.add_parser("scan", help="parse tiles and pair label files into manifest.tsv")
    common(p, "tiles", "workers")
    p.set_defaults(func=cmd_scan)

    p = sub.add_parser("grid", help="aggregate detections into counts.nc")
    common(p, "tiles", "workers", "classes", "timestamp")
    p.add_argument("--manifest", help="manifest.tsv from scan (default: <out>/manifest.tsv)")
    p.add_argument("--aoi", default="from-tiles", help="minE,minN,maxE,maxN in EPSG:3857 or from-tiles")
    p.add_argument("--cell-size", type=float, default=150.0)
    p.add_argument("--conf", type=float, default=0.25)
    p.add_argument("--skip-bad", action="store_true", help="count and skip tiles that fail to parse")
    p.set_defaults(func=cmd_grid)

    p = sub.add_parser("emit", help="apply emission factors, writing emissions.nc")
    common(p, "timestamp")
    p.add_argument("--counts", help="counts.nc (default: <out>/counts.nc)")
    p.add_argument("--factors", help="'label = value' emission factor file")
    p.set_defaults(func=cmd_emit)

    p = sub.add_parser("render", help="write heatmap_<plane>.ppm")
    common(p)
    p.add_argument("--counts", help="counts.nc (default: <out>/counts.nc)")
    p.add_argument("--plane", default="total")
    p.add_argument("--cell-px", type=int, default=8)
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("eval", help="confusion matrix and F1-confidence curve")
    common(p, "classes")
    p.add_argument("--gt", required=True, help="ground-truth label directory")
    p.add_argument("--pred", required=True, help="prediction label directory")
    p.add_argument("--iou", type=float, default=0.5)
    p.add_argument("--conf", type=float, default=0.25, help="threshold for the confusion matrix")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("synth", help="write a seeded synthetic tile corpus")
    common(p, "classes")
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--aoi", help="minE,minN,maxE,maxN; must be whole tiles")
    p.add_argument("--tile-px", default="64,64")
    p.add_argument("--pixel-size", default="0.5")
    p.add_argument("--objects", default="10,10,10,10", help="objects per class")
    p.add_argument("--cell-size", type=float, default=150.0)
    p.add_argument("--bands", type=int, default=1)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("validate", help="gdalinfo-style georeference checks")
    common(p)
    p.add_argument("--tiles", help="directory of GeoTIFF tiles")
    p.add_argument("--tolerance", type=float, default=1e-4, help="filename-center tolerance (deg)")
    p.set_defaults(func=cmd_validate)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"gridvec {args.command}: {exc}", file=sys.stderr)
        return exc.code


if __name__ == "__main__":
    sys.exit(main())
