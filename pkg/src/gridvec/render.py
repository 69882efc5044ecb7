"""Deterministic heatmap rasters and binary PPM encoding."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .gridder import CountGrid


class UnknownPlane(KeyError):
    pass


@dataclass(frozen=True)
class ColorScale:
    stops: tuple[tuple[float, tuple[int, int, int]], ...]

    def __post_init__(self):
        stops = tuple((float(p), tuple(int(v) for v in rgb)) for p, rgb in self.stops)
        object.__setattr__(self, "stops", stops)
        if len(stops) < 2 or stops[0][0] != 0.0 or stops[-1][0] != 1.0:
            raise ValueError("color scale must run from position 0 to position 1")
        if any(b[0] <= a[0] for a, b in zip(stops, stops[1:])):
            raise ValueError("stop positions must ascend")


HOT = ColorScale((
    (0.0, (0, 0, 0)),
    (0.25, (139, 0, 0)),
    (0.5, (255, 140, 0)),
    (0.75, (255, 255, 0)),
    (1.0, (255, 255, 255)),
))
GRAY = ColorScale(((0.0, (0, 0, 0)), (1.0, (255, 255, 255))))


@dataclass
class RasterImage:
    width: int
    height: int
    pixels: np.ndarray  # (height, width, 3) uint8

    def __post_init__(self):
        self.pixels = np.asarray(self.pixels, dtype=np.uint8)
        if self.pixels.shape != (self.height, self.width, 3):
            raise ValueError(f"pixel array {self.pixels.shape} does not match {self.width}x{self.height}")


def colormap(value: float, vmin: float, vmax: float, scale: ColorScale = HOT) -> tuple[int, int, int]:
    if vmin > vmax:
        raise ValueError("vmin must not exceed vmax")
    v = min(max(value, vmin), vmax)
    t = 0.0 if vmax == vmin else (v - vmin) / (vmax - vmin)
    stops = scale.stops
    for (p0, c0), (p1, c1) in zip(stops, stops[1:]):
        if t <= p1:
            f = (t - p0) / (p1 - p0)
            return tuple(int(math.floor(a + (b - a) * f + 0.5)) for a, b in zip(c0, c1))
    return stops[-1][1]


def render_plane(plane: np.ndarray, cell_px: int = 8, scale: ColorScale = HOT) -> RasterImage:
    """Paint a (rows, cols) array with grid row 0 at the bottom of the image."""
    if cell_px < 1:
        raise ValueError("cell_px must be >= 1")
    plane = np.asarray(plane)
    vmax = max(float(plane.max()), 0.0) if plane.size else 0.0
    lut = {v: colormap(float(v), 0.0, vmax, scale) for v in np.unique(plane).tolist()}
    colors = np.zeros(plane.shape + (3,), dtype=np.uint8)
    for v, rgb in lut.items():
        colors[plane == v] = rgb
    colors = colors[::-1]  # northernmost row first
    pixels = np.repeat(np.repeat(colors, cell_px, axis=0), cell_px, axis=1)
    rows, cols = plane.shape
    return RasterImage(cols * cell_px, rows * cell_px, pixels)


def render_heatmap(grid: CountGrid, plane: str = "total", cell_px: int = 8,
                   scale: ColorScale = HOT) -> RasterImage:
    if plane != "total" and plane not in grid.class_names:
        raise UnknownPlane(plane)
    return render_plane(grid.plane(plane), cell_px, scale)


def encode_ppm(img: RasterImage) -> bytes:
    header = f"P6\n{img.width} {img.height}\n255\n".encode("ascii")
    return header + img.pixels.tobytes()


def decode_ppm(data: bytes) -> RasterImage:
    """Read back a binary PPM as written by :func:`encode_ppm` (comments allowed)."""
    tokens = []
    pos = 0
    while len(tokens) < 4:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if data[pos:pos + 1] == b"#":
            while pos < len(data) and data[pos:pos + 1] != b"\n":
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace():
            pos += 1
        if start == pos:
            raise ValueError("truncated PPM header")
        tokens.append(data[start:pos])
    if tokens[0] != b"P6" or tokens[3] != b"255":
        raise ValueError("only 8-bit binary PPM (P6) is supported")
    width, height = int(tokens[1]), int(tokens[2])
    body = data[pos + 1:]
    if len(body) != width * height * 3:
        raise ValueError("PPM payload length does not match header")
    pixels = np.frombuffer(body, dtype=np.uint8).reshape(height, width, 3)
    return RasterImage(width, height, pixels.copy())


CURVE_COLORS = [(31, 119, 180), (255, 127, 14), (44, 160, 44), (214, 39, 40),
                (148, 103, 189), (140, 86, 75), (227, 119, 194), (127, 127, 127)]


def render_curve(thresholds, series, width: int = 400, height: int = 300,
                 margin: int = 20) -> RasterImage:
    """Line plot of y in [0, 1] over x in [0, 1] on a white canvas.

    ``series`` is a list of y-arrays; the last one is drawn in black and
    thicker (the all-class curve).
    """
    img = np.full((height, width, 3), 255, dtype=np.uint8)
    x0, x1 = margin, width - margin - 1
    y0, y1 = height - margin - 1, margin
    img[y1:y0 + 1, x0] = 0
    img[y0, x0:x1 + 1] = 0
    xs = np.asarray(thresholds, dtype=float)
    px = np.rint(x0 + xs * (x1 - x0)).astype(int)
    for k, ys in enumerate(series):
        last = k == len(series) - 1
        color = (0, 0, 0) if last else CURVE_COLORS[k % len(CURVE_COLORS)]
        py = np.rint(y0 + np.clip(np.asarray(ys, float), 0, 1) * (y1 - y0)).astype(int)
        for i in range(len(px) - 1):
            n = max(abs(px[i + 1] - px[i]), abs(py[i + 1] - py[i]), 1)
            lx = np.rint(np.linspace(px[i], px[i + 1], n + 1)).astype(int)
            ly = np.rint(np.linspace(py[i], py[i + 1], n + 1)).astype(int)
            img[ly, lx] = color
            if last:
                img[np.clip(ly - 1, 0, height - 1), lx] = color
    return RasterImage(width, height, img)
