"""Spherical Web Mercator (EPSG:3857) transforms and raster georeferencing.

All angles are radians internally; degrees appear only at the public
boundary. Northing uses atanh(sin(lat)), the same function as
ln(tan(pi/4 + lat/2)) but exact at the equator and better conditioned.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

EARTH_RADIUS = 6378137.0
HALF_WORLD = math.pi * EARTH_RADIUS
MAX_LATITUDE = 85.06


class OutOfDomain(ValueError):
    pass


class OutOfRaster(ValueError):
    pass


@dataclass(frozen=True)
class GeoPoint:
    latitude: float
    longitude: float


@dataclass(frozen=True)
class ProjectedPoint:
    easting: float
    northing: float


def mercator_forward(p: GeoPoint) -> ProjectedPoint:
    lat, lon = p.latitude, p.longitude
    if not (abs(lat) < MAX_LATITUDE) or not (abs(lon) <= 180.0):
        raise OutOfDomain(f"({lat}, {lon}) outside the Pseudo-Mercator validity band")
    phi = math.radians(lat)
    lam = math.radians(lon)
    return ProjectedPoint(
        EARTH_RADIUS * lam,
        EARTH_RADIUS * math.atanh(math.sin(phi)),
    )


def mercator_inverse(p: ProjectedPoint) -> GeoPoint:
    e, n = p.easting, p.northing
    if not (abs(e) <= HALF_WORLD) or not (abs(n) <= HALF_WORLD):
        raise OutOfDomain(f"({e}, {n}) outside the EPSG:3857 plane")
    lon = math.degrees(e / EARTH_RADIUS)
    lat = math.degrees(math.atan(math.sinh(n / EARTH_RADIUS)))
    return GeoPoint(lat, lon)


def forward_arrays(lat, lon):
    """Vectorised :func:`mercator_forward` over degree arrays."""
    lat = np.asarray(lat, dtype=np.float64)
    lon = np.asarray(lon, dtype=np.float64)
    if np.any(~(np.abs(lat) < MAX_LATITUDE)) or np.any(~(np.abs(lon) <= 180.0)):
        raise OutOfDomain("coordinates outside the Pseudo-Mercator validity band")
    easting = EARTH_RADIUS * np.radians(lon)
    northing = EARTH_RADIUS * np.arctanh(np.sin(np.radians(lat)))
    return easting, northing


def inverse_arrays(easting, northing):
    """Vectorised :func:`mercator_inverse`; returns (lat, lon) in degrees."""
    easting = np.asarray(easting, dtype=np.float64)
    northing = np.asarray(northing, dtype=np.float64)
    if np.any(~(np.abs(easting) <= HALF_WORLD)) or np.any(~(np.abs(northing) <= HALF_WORLD)):
        raise OutOfDomain("coordinates outside the EPSG:3857 plane")
    lon = np.degrees(easting / EARTH_RADIUS)
    lat = np.degrees(np.arctan(np.sinh(northing / EARTH_RADIUS)))
    return lat, lon


def pixel_to_projected(t, px: float, py: float) -> ProjectedPoint:
    """Map fractional pixel coordinates of a north-up raster to map meters.

    ``t`` is a :class:`gridvec.geotiff_meta.GeoTransform`. Edges are
    inclusive, so ``(width, height)`` is the lower-right corner.
    """
    if not (0.0 <= px <= t.width) or not (0.0 <= py <= t.height):
        raise OutOfRaster(f"pixel ({px}, {py}) outside {t.width}x{t.height} raster")
    return ProjectedPoint(
        t.origin_easting + px * t.pixel_size_x,
        t.origin_northing + py * t.pixel_size_y,
    )


def format_dms(angle: float, axis: str, pad: bool = False) -> str:
    """Render ``angle`` as gdalinfo-style degrees/minutes/seconds.

    >>> format_dms(77.1292583, "lon")
    '77d 7\\'45.33"E'

    With ``pad`` the degree field is right-aligned to 3 (lon) or 2 (lat)
    characters, which is how corner lines are laid out.
    """
    if axis not in ("lat", "lon"):
        raise ValueError(f"axis must be 'lat' or 'lon', got {axis!r}")
    if axis == "lat":
        hemi = "N" if angle >= 0 else "S"
    else:
        hemi = "E" if angle >= 0 else "W"
    # work in hundredths of an arcsecond so carries are exact
    total = round(abs(angle) * 360000.0)
    deg, rem = divmod(total, 360000)
    minutes, centis = divmod(rem, 6000)
    sec_int, sec_frac = divmod(centis, 100)
    width = (3 if axis == "lon" else 2) if pad else 0
    return f"{deg:>{width}d}d{minutes:2d}'{sec_int}.{sec_frac:02d}\"{hemi}"


def parse_dms(text: str) -> float:
    """Inverse of :func:`format_dms`, used to compare against printed strings."""
    text = text.strip()
    d, rest = text.split("d", 1)
    m, rest = rest.split("'", 1)
    s, hemi = rest.split('"', 1)
    value = int(d) + int(m) / 60.0 + float(s) / 3600.0
    return -value if hemi.strip() in ("S", "W") else value
