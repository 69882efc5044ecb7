"""Emission factors and the count/emission inventory datasets."""
from __future__ import annotations

import math
import re
import warnings
from dataclasses import dataclass

import numpy as np

from . import __version__
from .detect_io import ClassMap
from .gridder import CountGrid, GridSpec, cell_centers
from .netcdf import Dataset, Variable, read_netcdf, write_netcdf

DEFAULT_UNIT = "g h-1"

__all__ = [
    "EmissionFactorTable", "load_emission_factors", "counts_to_emissions",
    "inventory_dataset", "grid_from_dataset", "write_netcdf", "read_netcdf",
]


class FactorError(ValueError):
    pass


class MissingClass(FactorError):
    pass


class NegativeFactor(FactorError):
    pass


class UnknownLabel(UserWarning):
    pass


@dataclass(frozen=True)
class EmissionFactorTable:
    factors: dict[str, float]
    unit: str = DEFAULT_UNIT

    def covers(self, names) -> bool:
        return all(n in self.factors for n in names)


def load_emission_factors(text: str, cm: ClassMap, unit: str = DEFAULT_UNIT) -> EmissionFactorTable:
    """Read ``label = value`` lines (``#`` comments allowed).

    A ``unit = ...`` line sets the unit string unless ``unit`` is itself a
    class label.
    """
    factors: dict[str, float] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise FactorError(f"line {lineno}: expected 'label = value', got {raw!r}")
        label, value = (s.strip() for s in line.split("=", 1))
        if label == "unit" and "unit" not in cm.names:
            unit = value
            continue
        try:
            factor = float(value)
        except ValueError:
            raise FactorError(f"line {lineno}: factor {value!r} is not a number") from None
        if not math.isfinite(factor):
            raise FactorError(f"line {lineno}: factor must be finite")
        if factor < 0:
            raise NegativeFactor(f"line {lineno}: factor for {label!r} is negative ({factor})")
        if label not in cm.names:
            warnings.warn(f"emission factor for unknown class {label!r} ignored", UnknownLabel)
            continue
        factors[label] = factor
    missing = [n for n in cm.names if n not in factors]
    if missing:
        raise MissingClass(f"no emission factor for {missing}")
    return EmissionFactorTable({n: factors[n] for n in cm.names}, unit)


def counts_to_emissions(grid: CountGrid, table: EmissionFactorTable) -> dict[str, np.ndarray]:
    if not table.covers(grid.class_names):
        raise MissingClass("factor table does not cover every grid class")
    return {name: grid.counts[c].astype(np.float64) * table.factors[name]
            for c, name in enumerate(grid.class_names)}


def var_suffix(label: str) -> str:
    return re.sub(r"[^A-Za-z0-9_]", "_", label)


def inventory_dataset(grid: CountGrid, timestamp: str,
                      emissions: dict[str, np.ndarray] | None = None,
                      unit: str = DEFAULT_UNIT) -> Dataset:
    """Package a count grid (and optional emission planes) for netCDF output.

    Rows run south to north along ``lat``; columns west to east along ``lon``.
    """
    spec = grid.spec
    lat, lon = cell_centers(spec)
    variables = {
        "latitude": Variable(("lat",), lat, {"units": "degrees_north", "long_name": "cell center latitude"}),
        "longitude": Variable(("lon",), lon, {"units": "degrees_east", "long_name": "cell center longitude"}),
    }
    for c, name in enumerate(grid.class_names):
        variables[f"count_{var_suffix(name)}"] = Variable(
            ("lat", "lon"), grid.counts[c].astype(np.int32),
            {"units": "1", "long_name": f"detected {name} per cell", "class_label": name},
        )
    if emissions is not None:
        for name in grid.class_names:
            variables[f"emis_{var_suffix(name)}"] = Variable(
                ("lat", "lon"), np.asarray(emissions[name], dtype=np.float32),
                {"units": unit, "long_name": f"{name} emission per cell", "class_label": name},
            )
    attrs = {
        "cell_size_m": float(spec.cell_size),
        "crs": "EPSG:3857",
        "conf_threshold": float(grid.conf_threshold),
        "grid_min_easting": float(spec.min_easting),
        "grid_min_northing": float(spec.min_northing),
        "classes": ",".join(grid.class_names),
        "skipped_out_of_grid": int(grid.skipped),
        "below_threshold": int(grid.below_threshold),
        "source": f"gridvec {__version__}",
        "created": timestamp,
    }
    return Dataset({"lat": spec.n_rows, "lon": spec.n_cols}, variables, attrs)


def _scalar(ds: Dataset, key: str):
    value = ds.attributes[key]
    return value if isinstance(value, str) else value[0].item()


def grid_from_dataset(ds: Dataset) -> CountGrid:
    """Rebuild the :class:`CountGrid` stored by :func:`inventory_dataset`."""
    try:
        names = tuple(_scalar(ds, "classes").split(","))
        spec = GridSpec(_scalar(ds, "grid_min_easting"), _scalar(ds, "grid_min_northing"),
                        _scalar(ds, "cell_size_m"), ds.dimensions["lon"], ds.dimensions["lat"])
        counts = np.stack([ds.variables[f"count_{var_suffix(n)}"].data.astype(np.int64)
                           for n in names])
        grid = CountGrid(spec, names, counts, _scalar(ds, "conf_threshold"))
        grid.skipped = int(_scalar(ds, "skipped_out_of_grid"))
        grid.below_threshold = int(_scalar(ds, "below_threshold"))
    except KeyError as exc:
        raise ValueError(f"dataset is not a gridvec inventory (missing {exc})") from None
    return grid


InventoryDataset = Dataset
