"""GeoTIFF georeferencing metadata, read straight from the TIFF byte layout.

Only the first IFD of a classic (non-Big) TIFF is read and only the tags
needed to georeference a north-up EPSG:3857 raster are decoded. Pixel data
is never touched beyond a bounds check on the strip table.
"""
from __future__ import annotations

import math
import os
import re
import struct
from dataclasses import dataclass, field

from .projection import GeoPoint, mercator_inverse, pixel_to_projected

TAG_IMAGE_WIDTH = 256
TAG_IMAGE_LENGTH = 257
TAG_BITS_PER_SAMPLE = 258
TAG_COMPRESSION = 259
TAG_PHOTOMETRIC = 262
TAG_STRIP_OFFSETS = 273
TAG_SAMPLES_PER_PIXEL = 277
TAG_ROWS_PER_STRIP = 278
TAG_STRIP_BYTE_COUNTS = 279
TAG_PLANAR_CONFIG = 284
TAG_EXTRA_SAMPLES = 338
TAG_MODEL_PIXEL_SCALE = 33550
TAG_MODEL_TIEPOINT = 33922
TAG_GEO_KEY_DIRECTORY = 34735

GEOKEY_MODEL_TYPE = 1024
GEOKEY_RASTER_TYPE = 1025
GEOKEY_PROJECTED_CS_TYPE = 3072

# TIFF field type -> (struct code, byte size)
FIELD_TYPES = {
    1: ("B", 1),   # BYTE
    2: ("s", 1),   # ASCII
    3: ("H", 2),   # SHORT
    4: ("I", 4),   # LONG
    5: ("II", 8),  # RATIONAL
    6: ("b", 1),   # SBYTE
    7: ("B", 1),   # UNDEFINED
    8: ("h", 2),   # SSHORT
    9: ("i", 4),   # SLONG
    10: ("ii", 8), # SRATIONAL
    11: ("f", 4),  # FLOAT
    12: ("d", 8),  # DOUBLE
}


class GeoTiffError(ValueError):
    pass


class MalformedTiff(GeoTiffError):
    pass


class MissingGeoTag(GeoTiffError):
    pass


class UnsupportedCrs(GeoTiffError):
    pass


class UnsupportedLayout(GeoTiffError):
    pass


class InvalidMeta(GeoTiffError):
    pass


class PatternMismatch(ValueError):
    pass


@dataclass(frozen=True)
class GeoTransform:
    origin_easting: float
    origin_northing: float
    pixel_size_x: float
    pixel_size_y: float
    width: int
    height: int

    def check(self) -> None:
        """Raise :class:`InvalidMeta` unless this is a north-up raster."""
        if not (self.pixel_size_x > 0 and math.isfinite(self.pixel_size_x)):
            raise InvalidMeta(f"pixel_size_x must be > 0, got {self.pixel_size_x}")
        if not (self.pixel_size_y < 0 and math.isfinite(self.pixel_size_y)):
            raise InvalidMeta(f"pixel_size_y must be < 0, got {self.pixel_size_y}")
        if self.width < 1 or self.height < 1:
            raise InvalidMeta(f"raster must be at least 1x1, got {self.width}x{self.height}")
        if not (math.isfinite(self.origin_easting) and math.isfinite(self.origin_northing)):
            raise InvalidMeta("origin must be finite")

    @property
    def extent(self) -> tuple[float, float, float, float]:
        """(min_easting, min_northing, max_easting, max_northing)."""
        lr = pixel_to_projected(self, self.width, self.height)
        return (self.origin_easting, lr.northing, lr.easting, self.origin_northing)


@dataclass(frozen=True)
class TileMeta:
    source_id: str
    transform: GeoTransform
    crs_epsg: int = 3857
    filename_center: tuple[float, float] | None = None
    band_count: int = 1

    def center(self) -> GeoPoint:
        t = self.transform
        return mercator_inverse(pixel_to_projected(t, t.width / 2.0, t.height / 2.0))


_CENTER_NAME = re.compile(r"^([+-]?\d+\.\d+)_([+-]?\d+\.\d+)$")


def parse_filename_center(name: str) -> tuple[float, float]:
    """Read ``(lat, lon)`` from a ``<lat>_<lon>.tiff`` style file name."""
    stem = os.path.splitext(os.path.basename(name))[0]
    m = _CENTER_NAME.match(stem)
    if m is None:
        raise PatternMismatch(f"{name!r} does not follow the <lat>_<lon> naming convention")
    lat, lon = float(m.group(1)), float(m.group(2))
    if abs(lat) > 90.0 or abs(lon) > 180.0:
        raise PatternMismatch(f"{name!r} encodes an impossible coordinate")
    return lat, lon


def filename_center_or_none(name: str) -> tuple[float, float] | None:
    try:
        return parse_filename_center(name)
    except PatternMismatch:
        return None


class _Reader:
    """Bounds-checked struct access over an immutable buffer."""

    def __init__(self, data: bytes, order: str):
        self.data = data
        self.order = order

    def unpack(self, fmt: str, offset: int):
        size = struct.calcsize(self.order + fmt)
        if offset < 0 or offset + size > len(self.data):
            raise MalformedTiff(f"read of {size} bytes at offset {offset} runs past end of file")
        return struct.unpack_from(self.order + fmt, self.data, offset)


def _read_ifd(r: _Reader, ifd_offset: int) -> dict[int, tuple]:
    (count,) = r.unpack("H", ifd_offset)
    if count == 0:
        raise MalformedTiff("empty IFD")
    entries: dict[int, tuple] = {}
    for i in range(count):
        pos = ifd_offset + 2 + 12 * i
        tag, ftype, n = r.unpack("HHI", pos)
        if ftype not in FIELD_TYPES:
            # unknown field types must be skipped, not rejected
            r.unpack("I", pos + 8)
            continue
        code, size = FIELD_TYPES[ftype]
        nbytes = size * n
        if nbytes <= 4:
            value_pos = pos + 8
        else:
            (value_pos,) = r.unpack("I", pos + 8)
        if n == 0:
            values: tuple = ()
        elif ftype == 2:
            (raw,) = r.unpack(f"{n}s", value_pos)
            values = (raw.split(b"\0", 1)[0].decode("latin-1"),)
        else:
            values = r.unpack(f"{n * len(code)}{code[0]}", value_pos)
        entries[tag] = values
    # the next-IFD pointer must be present even though it is not followed
    r.unpack("I", ifd_offset + 2 + 12 * count)
    return entries


def _single_int(entries: dict, tag: int, default: int | None = None) -> int:
    if tag not in entries:
        if default is None:
            raise MalformedTiff(f"required tag {tag} missing")
        return default
    values = entries[tag]
    if len(values) < 1 or not isinstance(values[0], int):
        raise MalformedTiff(f"tag {tag} has no integer value")
    return values[0]


def _projected_cs(keys: tuple) -> int:
    if len(keys) < 4:
        raise MalformedTiff("GeoKeyDirectory shorter than its header")
    version, _rev, _minor, n = keys[:4]
    if version != 1:
        raise MalformedTiff(f"unsupported GeoKeyDirectory version {version}")
    if len(keys) < 4 + 4 * n:
        raise MalformedTiff("GeoKeyDirectory truncated")
    for i in range(n):
        key_id, location, count, value = keys[4 + 4 * i: 8 + 4 * i]
        if key_id == GEOKEY_PROJECTED_CS_TYPE:
            if location != 0 or count != 1:
                raise MalformedTiff("ProjectedCSTypeGeoKey must be stored inline")
            return value
    raise MissingGeoTag("GeoKeyDirectory has no ProjectedCSTypeGeoKey (3072)")


def parse_tiff_metadata(data: bytes, source_id: str = "") -> TileMeta:
    """Decode the georeferencing of a classic GeoTIFF.

    ``source_id`` is carried through to the result and, when it follows the
    ``<lat>_<lon>`` convention, supplies ``filename_center``.
    """
    data = bytes(data)
    if len(data) < 8:
        raise MalformedTiff("file shorter than a TIFF header")
    if data[:2] == b"II":
        order = "<"
    elif data[:2] == b"MM":
        order = ">"
    else:
        raise MalformedTiff(f"bad byte-order mark {data[:2]!r}")
    r = _Reader(data, order)
    magic, ifd_offset = r.unpack("HI", 2)
    if magic == 43:
        raise MalformedTiff("BigTIFF is not supported")
    if magic != 42:
        raise MalformedTiff(f"bad TIFF magic {magic}")
    entries = _read_ifd(r, ifd_offset)

    width = _single_int(entries, TAG_IMAGE_WIDTH)
    height = _single_int(entries, TAG_IMAGE_LENGTH)
    bands = _single_int(entries, TAG_SAMPLES_PER_PIXEL, default=1)
    if width < 1 or height < 1 or bands < 1:
        raise MalformedTiff(f"degenerate raster {width}x{height}x{bands}")

    offsets = entries.get(TAG_STRIP_OFFSETS)
    counts = entries.get(TAG_STRIP_BYTE_COUNTS)
    if offsets is not None and counts is not None:
        if not all(isinstance(v, int) for v in offsets + counts):
            raise MalformedTiff("strip offsets and counts must be integers")
        if len(offsets) != len(counts):
            raise MalformedTiff("strip offset/count tables differ in length")
        for off, n in zip(offsets, counts):
            if off + n > len(data):
                raise MalformedTiff("strip data runs past end of file")

    for tag in (TAG_MODEL_PIXEL_SCALE, TAG_MODEL_TIEPOINT, TAG_GEO_KEY_DIRECTORY):
        if tag not in entries:
            raise MissingGeoTag(f"GeoTIFF tag {tag} absent")
    scale = entries[TAG_MODEL_PIXEL_SCALE]
    tie = entries[TAG_MODEL_TIEPOINT]
    keys = entries[TAG_GEO_KEY_DIRECTORY]
    if len(scale) < 2 or not all(isinstance(v, float) for v in scale):
        raise MalformedTiff("ModelPixelScaleTag must hold doubles")
    if len(tie) < 6 or not all(isinstance(v, float) for v in tie):
        raise MalformedTiff("ModelTiepointTag must hold doubles")
    if not all(isinstance(v, int) for v in keys):
        raise MalformedTiff("GeoKeyDirectoryTag must hold shorts")
    if len(tie) != 6 or tie[0] != 0.0 or tie[1] != 0.0:
        raise UnsupportedLayout("tiepoint must anchor raster pixel (0, 0)")
    epsg = _projected_cs(keys)
    if epsg != 3857:
        raise UnsupportedCrs(f"EPSG:{epsg} is not EPSG:3857")

    transform = GeoTransform(
        origin_easting=tie[3],
        origin_northing=tie[4],
        pixel_size_x=scale[0],
        pixel_size_y=-scale[1],
        width=width,
        height=height,
    )
    try:
        transform.check()
    except InvalidMeta as exc:
        raise UnsupportedLayout(str(exc)) from None
    return TileMeta(
        source_id=source_id,
        transform=transform,
        crs_epsg=epsg,
        filename_center=filename_center_or_none(source_id) if source_id else None,
        band_count=bands,
    )


def read_tile(path: str | os.PathLike) -> TileMeta:
    with open(path, "rb") as fh:
        data = fh.read()
    return parse_tiff_metadata(data, source_id=os.fspath(path))


def _photometric(bands: int) -> int:
    return 2 if bands >= 3 else 1


def _extra_samples(bands: int) -> list[int]:
    base = 3 if bands >= 3 else 1
    extra = [0] * (bands - base)
    if bands == 4:
        extra = [2]  # unassociated alpha, as in RGBA exports
    return extra


def write_synthetic_geotiff(meta: TileMeta, fill: int | bytes | list[int] = 0,
                            byteorder: str = "<") -> bytes:
    """Encode ``meta`` as a minimal uncompressed single-strip GeoTIFF.

    ``fill`` is one byte value per band (or a single value for all bands).
    Output is deterministic; ``byteorder=">"`` exists only so tests can
    exercise big-endian parsing.
    """
    t = meta.transform
    t.check()
    if meta.crs_epsg != 3857:
        raise InvalidMeta(f"only EPSG:3857 tiles can be written, got {meta.crs_epsg}")
    bands = meta.band_count
    if bands < 1:
        raise InvalidMeta("band_count must be >= 1")
    if isinstance(fill, int):
        fill_bytes = bytes([fill]) * bands
    else:
        fill_bytes = bytes(fill)
        if len(fill_bytes) != bands:
            raise InvalidMeta(f"need {bands} fill bytes, got {len(fill_bytes)}")
    strip_len = t.width * t.height * bands
    if strip_len > 0xFFFFFFFF:
        raise InvalidMeta("raster too large for a classic TIFF strip")

    geokeys = [1, 1, 0, 3,
               GEOKEY_MODEL_TYPE, 0, 1, 1,
               GEOKEY_RASTER_TYPE, 0, 1, 1,
               GEOKEY_PROJECTED_CS_TYPE, 0, 1, meta.crs_epsg]
    # (tag, type, values); strip offset patched once the layout is known
    tags: list[tuple[int, int, list]] = [
        (TAG_IMAGE_WIDTH, 4, [t.width]),
        (TAG_IMAGE_LENGTH, 4, [t.height]),
        (TAG_BITS_PER_SAMPLE, 3, [8] * bands),
        (TAG_COMPRESSION, 3, [1]),
        (TAG_PHOTOMETRIC, 3, [_photometric(bands)]),
        (TAG_STRIP_OFFSETS, 4, [0]),
        (TAG_SAMPLES_PER_PIXEL, 3, [bands]),
        (TAG_ROWS_PER_STRIP, 4, [t.height]),
        (TAG_STRIP_BYTE_COUNTS, 4, [strip_len]),
        (TAG_PLANAR_CONFIG, 3, [1]),
    ]
    extra = _extra_samples(bands)
    if extra:
        tags.append((TAG_EXTRA_SAMPLES, 3, extra))
    tags += [
        (TAG_MODEL_PIXEL_SCALE, 12, [t.pixel_size_x, -t.pixel_size_y, 0.0]),
        (TAG_MODEL_TIEPOINT, 12, [0.0, 0.0, 0.0, t.origin_easting, t.origin_northing, 0.0]),
        (TAG_GEO_KEY_DIRECTORY, 3, geokeys),
    ]

    ifd_offset = 8
    ifd_size = 2 + 12 * len(tags) + 4
    cursor = ifd_offset + ifd_size
    blobs: list[bytes] = []
    offsets: dict[int, int] = {}
    for tag, ftype, values in tags:
        code, size = FIELD_TYPES[ftype]
        if size * len(values) > 4:
            if cursor % 2:
                blobs.append(b"\0")
                cursor += 1
            offsets[tag] = cursor
            blob = struct.pack(f"{byteorder}{len(values)}{code}", *values)
            blobs.append(blob)
            cursor += len(blob)
    if cursor % 2:
        blobs.append(b"\0")
        cursor += 1
    strip_offset = cursor

    out = bytearray(b"II" if byteorder == "<" else b"MM")
    out += struct.pack(byteorder + "HI", 42, ifd_offset)
    out += struct.pack(byteorder + "H", len(tags))
    for tag, ftype, values in tags:
        if tag == TAG_STRIP_OFFSETS:
            values = [strip_offset]
        code, size = FIELD_TYPES[ftype]
        out += struct.pack(byteorder + "HHI", tag, ftype, len(values))
        if tag in offsets:
            out += struct.pack(byteorder + "I", offsets[tag])
        else:
            packed = struct.pack(f"{byteorder}{len(values)}{code}", *values)
            out += packed + b"\0" * (4 - len(packed))
    out += struct.pack(byteorder + "I", 0)
    for blob in blobs:
        out += blob
    assert len(out) == strip_offset
    out += fill_bytes * (t.width * t.height)
    return bytes(out)


@dataclass
class Check:
    name: str
    status: str  # "pass", "fail" or "skipped"
    detail: str = ""
    delta: float | None = None


@dataclass
class ValidationReport:
    source_id: str
    checks: list[Check] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return all(c.status != "fail" for c in self.checks)

    def get(self, name: str) -> Check:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)


def validate_tile(meta: TileMeta, tolerance_deg: float = 1e-4) -> ValidationReport:
    report = ValidationReport(meta.source_id)
    crs_ok = meta.crs_epsg == 3857
    report.checks.append(Check("crs", "pass" if crs_ok else "fail", f"EPSG:{meta.crs_epsg}"))

    t = meta.transform
    sizes_ok = t.pixel_size_x > 0 and t.pixel_size_y < 0
    report.checks.append(Check(
        "pixel_size", "pass" if sizes_ok else "fail",
        f"({t.pixel_size_x!r}, {t.pixel_size_y!r})",
    ))

    if meta.filename_center is None:
        report.checks.append(Check("filename_center", "skipped", "name carries no center"))
        return report
    if not sizes_ok:
        report.checks.append(Check("filename_center", "skipped", "geotransform invalid"))
        return report
    center = meta.center()
    lat, lon = meta.filename_center
    delta = max(abs(lat - center.latitude), abs(lon - center.longitude))
    report.checks.append(Check(
        "filename_center",
        "pass" if delta <= tolerance_deg else "fail",
        f"filename ({lat}, {lon}) vs geotransform ({center.latitude:.7f}, {center.longitude:.7f})",
        delta,
    ))
    return report
