"""Detector class configs, YOLO-style label files, and geographic placement."""
from __future__ import annotations

import math
import os
import re
from dataclasses import dataclass

from .geotiff_meta import TileMeta
from .projection import GeoPoint, ProjectedPoint, mercator_inverse, pixel_to_projected

DEFAULT_CLASS_NAMES = ("brick_kilns", "bus", "car", "miscellaneous")


class ConfigError(ValueError):
    pass


class CountMismatch(ConfigError):
    pass


class MalformedConfig(ConfigError):
    pass


class MalformedLabel(ValueError):
    def __init__(self, lineno: int, message: str):
        super().__init__(f"line {lineno}: {message}")
        self.lineno = lineno


@dataclass(frozen=True)
class ClassMap:
    names: tuple[str, ...] = DEFAULT_CLASS_NAMES

    def __post_init__(self):
        object.__setattr__(self, "names", tuple(self.names))
        if not self.names:
            raise MalformedConfig("class list is empty")
        if any(not n for n in self.names):
            raise MalformedConfig("class names must be non-empty")
        if len(set(self.names)) != len(self.names):
            raise MalformedConfig(f"duplicate class names in {list(self.names)}")

    @property
    def nc(self) -> int:
        return len(self.names)

    def index(self, label: str) -> int:
        return self.names.index(label)


@dataclass(frozen=True)
class Detection:
    class_id: int
    cx: float
    cy: float
    w: float
    h: float
    confidence: float | None = None


@dataclass(frozen=True)
class GeoDetection:
    class_id: int
    point: GeoPoint
    projected: ProjectedPoint
    confidence: float | None = None
    source_id: str = ""


_ITEM = re.compile(r"""\s*(?:'([^']*)'|"([^"]*)"|([^,'"\[\]]*?))\s*(,|$)""")


def _parse_inline_list(value: str) -> list[str]:
    value = value.strip()
    if not (value.startswith("[") and value.endswith("]")):
        raise MalformedConfig(f"names must be an inline [..] list, got {value!r}")
    body = value[1:-1]
    if "[" in body or "]" in body:
        raise MalformedConfig("unbalanced or nested brackets in names list")
    if not body.strip():
        return []
    names = []
    pos = 0
    while pos < len(body):
        m = _ITEM.match(body, pos)
        if m is None or m.end() == pos:
            raise MalformedConfig(f"cannot parse names list near {body[pos:]!r}")
        single, double, bare, sep = m.groups()
        name = single if single is not None else double if double is not None else bare
        if bare is not None and not bare:
            raise MalformedConfig("empty entry (stray comma) in names list")
        names.append(name)
        pos = m.end()
        if sep == "," and pos >= len(body):
            raise MalformedConfig("trailing comma in names list")
    return names


def parse_class_config(text: str) -> ClassMap:
    """Parse the flat ``nc:`` / ``names: [...]`` layout of a detector data config.

    Other ``key: value`` lines (train/val/test paths) are ignored.
    """
    nc = None
    names = None
    for line in text.splitlines():
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        if ":" not in line:
            raise MalformedConfig(f"expected 'key: value', got {line!r}")
        key, value = line.split(":", 1)
        key = key.strip()
        if key == "nc":
            try:
                nc = int(value.split("#", 1)[0].strip())
            except ValueError:
                raise MalformedConfig(f"nc must be an integer, got {value.strip()!r}") from None
        elif key == "names":
            names = _parse_inline_list(value)
    if nc is None or names is None:
        raise MalformedConfig("config must define both 'nc' and 'names'")
    if nc != len(names):
        raise CountMismatch(f"nc={nc} but {len(names)} names listed")
    return ClassMap(tuple(names))


def _parse_label_line(line: str, lineno: int, nc: int) -> Detection:
    fields = line.split()
    if len(fields) not in (5, 6):
        raise MalformedLabel(lineno, f"expected 5 or 6 fields, got {len(fields)}")
    try:
        class_id = int(fields[0])
    except ValueError:
        raise MalformedLabel(lineno, f"class id {fields[0]!r} is not an integer") from None
    try:
        values = [float(f) for f in fields[1:]]
    except ValueError:
        raise MalformedLabel(lineno, "non-numeric field") from None
    if not all(math.isfinite(v) for v in values):
        raise MalformedLabel(lineno, "non-finite field")
    if not 0 <= class_id < nc:
        raise MalformedLabel(lineno, f"class id {class_id} outside [0, {nc})")
    cx, cy, w, h = values[:4]
    if not (0.0 <= cx <= 1.0 and 0.0 <= cy <= 1.0):
        raise MalformedLabel(lineno, f"center ({cx}, {cy}) outside [0, 1]")
    if not (0.0 < w <= 1.0 and 0.0 < h <= 1.0):
        raise MalformedLabel(lineno, f"size ({w}, {h}) outside (0, 1]")
    conf = None
    if len(values) == 5:
        conf = values[4]
        if not 0.0 <= conf <= 1.0:
            raise MalformedLabel(lineno, f"confidence {conf} outside [0, 1]")
    return Detection(class_id, cx, cy, w, h, conf)


def parse_yolo_labels(text: str, cm: ClassMap) -> list[Detection]:
    """One :class:`Detection` per non-empty line, in file order."""
    out = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        if line.strip():
            out.append(_parse_label_line(line, lineno, cm.nc))
    return out


def parse_yolo_labels_lenient(text: str, cm: ClassMap) -> tuple[list[Detection], list[MalformedLabel]]:
    """Like :func:`parse_yolo_labels` but collects per-line errors instead of raising."""
    dets, errors = [], []
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            dets.append(_parse_label_line(line, lineno, cm.nc))
        except MalformedLabel as exc:
            errors.append(exc)
    return dets, errors


def format_label_line(det: Detection, precision: int = 10) -> str:
    parts = [str(det.class_id)] + [f"{v:.{precision}f}" for v in (det.cx, det.cy, det.w, det.h)]
    if det.confidence is not None:
        parts.append(f"{det.confidence:.6f}")
    return " ".join(parts)


def detections_to_geo(dets: list[Detection], tile: TileMeta) -> list[GeoDetection]:
    """Place box centers on the map through the tile's geotransform."""
    if tile.crs_epsg != 3857:
        raise ValueError(f"tile {tile.source_id} is EPSG:{tile.crs_epsg}, need 3857")
    t = tile.transform
    out = []
    for d in dets:
        projected = pixel_to_projected(t, d.cx * t.width, d.cy * t.height)
        out.append(GeoDetection(d.class_id, mercator_inverse(projected), projected,
                                d.confidence, tile.source_id))
    return out


def pair_labels(tile_paths: list[str], labels_dir: str | None,
                manifest: str | None = None) -> dict[str, str | None]:
    """Pair each tile with its label file.

    By default ``<stem>.txt`` in ``labels_dir`` (or beside the tile). A
    manifest of ``tile_path<TAB>label_path`` lines overrides the default for
    the tiles it names.
    """
    overrides: dict[str, str] = {}
    if manifest is not None:
        with open(manifest, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                line = line.rstrip("\n")
                if not line.strip() or line.startswith("#"):
                    continue
                parts = line.split("\t")
                if len(parts) != 2:
                    raise ValueError(f"{manifest}:{lineno}: expected tile<TAB>label")
                overrides[os.path.normpath(parts[0])] = parts[1]
    pairs: dict[str, str | None] = {}
    for tile in tile_paths:
        key = os.path.normpath(tile)
        if key in overrides:
            pairs[tile] = overrides[key]
            continue
        stem = os.path.splitext(os.path.basename(tile))[0]
        folder = labels_dir if labels_dir is not None else os.path.dirname(tile)
        candidate = os.path.join(folder, stem + ".txt")
        pairs[tile] = candidate if os.path.isfile(candidate) else None
    return pairs
