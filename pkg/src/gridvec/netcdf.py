"""netCDF-3 classic (CDF-1) encoder and decoder.

Fixed-size variables only: no record dimension, no compression. Everything
multi-byte is big-endian and every variable's data starts on a 4-byte
boundary with zero padding after it.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

MAGIC = b"CDF\x01"
NC_DIMENSION = 10
NC_VARIABLE = 11
NC_ATTRIBUTE = 12

NC_BYTE, NC_CHAR, NC_SHORT, NC_INT, NC_FLOAT, NC_DOUBLE = 1, 2, 3, 4, 5, 6
NC_DTYPES = {
    NC_BYTE: np.dtype(">i1"),
    NC_SHORT: np.dtype(">i2"),
    NC_INT: np.dtype(">i4"),
    NC_FLOAT: np.dtype(">f4"),
    NC_DOUBLE: np.dtype(">f8"),
}
_TYPE_OF_KIND = {("i", 1): NC_BYTE, ("i", 2): NC_SHORT, ("i", 4): NC_INT,
                 ("f", 4): NC_FLOAT, ("f", 8): NC_DOUBLE}
MAX_OFFSET = 2**31 - 1


class NetCDFError(ValueError):
    pass


class BadMagic(NetCDFError):
    pass


class UnsupportedVersion(NetCDFError):
    pass


class Truncated(NetCDFError):
    pass


class MalformedHeader(NetCDFError):
    pass


class TooLarge(NetCDFError):
    pass


def _nc_type(dtype: np.dtype) -> int:
    key = (dtype.kind, dtype.itemsize)
    if key not in _TYPE_OF_KIND:
        raise NetCDFError(f"dtype {dtype} has no classic netCDF equivalent")
    return _TYPE_OF_KIND[key]


def normalize_attr(value):
    """Attributes are held as ``str`` or a 1-D big-endian array."""
    if isinstance(value, str):
        return value
    if isinstance(value, bool):
        raise NetCDFError("boolean attributes are not representable")
    if isinstance(value, int):
        return np.array([value], dtype=">i4")
    if isinstance(value, float):
        return np.array([value], dtype=">f8")
    arr = np.asarray(value)
    if arr.ndim != 1 or arr.size == 0:
        arr = arr.reshape(-1)
    return arr.astype(NC_DTYPES[_nc_type(arr.dtype)])


def _attrs_equal(a: dict, b: dict) -> bool:
    if list(a) != list(b):
        return False
    for k in a:
        x, y = a[k], b[k]
        if isinstance(x, str) or isinstance(y, str):
            if x != y:
                return False
        elif x.dtype != y.dtype or x.tobytes() != y.tobytes():
            return False
    return True


@dataclass
class Variable:
    dimensions: tuple[str, ...]
    data: np.ndarray
    attributes: dict = field(default_factory=dict)

    def __post_init__(self):
        self.dimensions = tuple(self.dimensions)
        data = np.asarray(self.data)
        self.data = data.astype(NC_DTYPES[_nc_type(data.dtype)])
        self.attributes = {k: normalize_attr(v) for k, v in self.attributes.items()}

    def __eq__(self, other):
        if not isinstance(other, Variable):
            return NotImplemented
        return (self.dimensions == other.dimensions
                and self.data.dtype == other.data.dtype
                and self.data.shape == other.data.shape
                and self.data.tobytes() == other.data.tobytes()
                and _attrs_equal(self.attributes, other.attributes))


@dataclass
class Dataset:
    """In-memory netCDF dataset; dict order is declaration order."""

    dimensions: dict[str, int] = field(default_factory=dict)
    variables: dict[str, Variable] = field(default_factory=dict)
    attributes: dict = field(default_factory=dict)

    def __post_init__(self):
        self.attributes = {k: normalize_attr(v) for k, v in self.attributes.items()}

    def validate(self) -> None:
        for name, size in self.dimensions.items():
            if size < 1:
                raise NetCDFError(f"dimension {name!r} has length {size}; record dimensions unsupported")
        for name, var in self.variables.items():
            for d in var.dimensions:
                if d not in self.dimensions:
                    raise NetCDFError(f"variable {name!r} uses undeclared dimension {d!r}")
            shape = tuple(self.dimensions[d] for d in var.dimensions)
            if var.data.shape != shape:
                raise NetCDFError(f"variable {name!r} has shape {var.data.shape}, dims say {shape}")

    def __eq__(self, other):
        if not isinstance(other, Dataset):
            return NotImplemented
        return (list(self.dimensions.items()) == list(other.dimensions.items())
                and list(self.variables) == list(other.variables)
                and all(self.variables[k] == other.variables[k] for k in self.variables)
                and _attrs_equal(self.attributes, other.attributes))


def _pad4(n: int) -> int:
    return (-n) % 4


def _name(name: str) -> bytes:
    raw = name.encode("utf-8")
    if not raw:
        raise NetCDFError("empty names are not allowed")
    return struct.pack(">i", len(raw)) + raw + b"\0" * _pad4(len(raw))


def _attr_list(attrs: dict) -> bytes:
    if not attrs:
        return b"\0" * 8
    out = struct.pack(">ii", NC_ATTRIBUTE, len(attrs))
    for key, value in attrs.items():
        out += _name(key)
        if isinstance(value, str):
            raw = value.encode("utf-8")
            out += struct.pack(">ii", NC_CHAR, len(raw)) + raw + b"\0" * _pad4(len(raw))
        else:
            raw = value.tobytes()
            out += struct.pack(">ii", _nc_type(value.dtype), value.size) + raw + b"\0" * _pad4(len(raw))
    return out


def _vsize(var: Variable) -> int:
    n = var.data.nbytes
    return n + _pad4(n)


def write_netcdf(ds: Dataset) -> bytes:
    ds.validate()
    dim_ids = {name: i for i, name in enumerate(ds.dimensions)}
    head = MAGIC + struct.pack(">i", 0)
    if ds.dimensions:
        head += struct.pack(">ii", NC_DIMENSION, len(ds.dimensions))
        for name, size in ds.dimensions.items():
            head += _name(name) + struct.pack(">i", size)
    else:
        head += b"\0" * 8
    head += _attr_list(ds.attributes)

    # begin offsets depend on the header length, which does not depend on
    # the offsets' values, so size the header with placeholders first
    def var_list(begins):
        if not ds.variables:
            return b"\0" * 8
        out = struct.pack(">ii", NC_VARIABLE, len(ds.variables))
        for (name, var), begin in zip(ds.variables.items(), begins):
            vsize = _vsize(var)
            out += _name(name) + struct.pack(">i", len(var.dimensions))
            out += b"".join(struct.pack(">i", dim_ids[d]) for d in var.dimensions)
            out += _attr_list(var.attributes)
            out += struct.pack(">iii", _nc_type(var.data.dtype), min(vsize, MAX_OFFSET), begin)
        return out

    header_len = len(head) + len(var_list([0] * len(ds.variables)))
    begins = []
    cursor = header_len
    for var in ds.variables.values():
        begins.append(cursor)
        cursor += _vsize(var)
    if begins and begins[-1] > MAX_OFFSET:
        raise TooLarge("data offsets exceed the classic format's 32-bit limit")
    out = bytearray(head + var_list(begins))
    assert len(out) == header_len
    for var in ds.variables.values():
        raw = var.data.tobytes()
        out += raw + b"\0" * _pad4(len(raw))
    return bytes(out)


class _Cursor:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if n < 0:
            raise MalformedHeader("negative length")
        if self.pos + n > len(self.data):
            raise Truncated(f"need {n} bytes at offset {self.pos}, file has {len(self.data)}")
        chunk = self.data[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def int32(self) -> int:
        return struct.unpack(">i", self.take(4))[0]

    def count(self) -> int:
        n = self.int32()
        if n < 0:
            raise MalformedHeader(f"negative count {n}")
        return n

    def name(self) -> str:
        n = self.count()
        raw = self.take(n)
        self.take(_pad4(n))
        try:
            return raw.decode("utf-8")
        except UnicodeDecodeError:
            raise MalformedHeader("name is not valid UTF-8") from None

    def list_header(self, tag: int) -> int:
        got, n = self.int32(), self.count()
        if got == 0:
            if n != 0:
                raise MalformedHeader("ABSENT list with non-zero count")
            return 0
        if got != tag:
            raise MalformedHeader(f"expected list tag {tag}, got {got}")
        return n

    def attrs(self) -> dict:
        out = {}
        for _ in range(self.list_header(NC_ATTRIBUTE)):
            key = self.name()
            nc_type, n = self.int32(), self.count()
            if nc_type == NC_CHAR:
                raw = self.take(n)
                self.take(_pad4(n))
                try:
                    out[key] = raw.decode("utf-8")
                except UnicodeDecodeError:
                    raise MalformedHeader(f"attribute {key!r} is not UTF-8") from None
            elif nc_type in NC_DTYPES:
                dt = NC_DTYPES[nc_type]
                raw = self.take(n * dt.itemsize)
                self.take(_pad4(len(raw)))
                out[key] = np.frombuffer(raw, dtype=dt).copy()
            else:
                raise MalformedHeader(f"unknown attribute type {nc_type}")
        return out


def read_netcdf(data: bytes) -> Dataset:
    data = bytes(data)
    if len(data) < 4:
        raise Truncated("file shorter than the format magic")
    if data[:3] != b"CDF":
        if data[:4] == b"\x89HDF":
            raise UnsupportedVersion("HDF5-based netCDF-4 is not supported")
        raise BadMagic(f"bad magic {data[:4]!r}")
    if data[3] != 1:
        raise UnsupportedVersion(f"CDF version {data[3]} is not supported, only classic (1)")
    cur = _Cursor(data)
    cur.take(4)
    numrecs = cur.int32()
    if numrecs != 0:
        raise MalformedHeader(f"numrecs={numrecs}; record variables are unsupported")

    dims: dict[str, int] = {}
    dim_names: list[str] = []
    for _ in range(cur.list_header(NC_DIMENSION)):
        name = cur.name()
        size = cur.int32()
        if size == 0:
            raise UnsupportedVersion(f"dimension {name!r} is a record dimension")
        if size < 0:
            raise MalformedHeader(f"dimension {name!r} has negative length")
        if name in dims:
            raise MalformedHeader(f"duplicate dimension {name!r}")
        dims[name] = size
        dim_names.append(name)
    gattrs = cur.attrs()

    specs = []
    for _ in range(cur.list_header(NC_VARIABLE)):
        name = cur.name()
        ndims = cur.count()
        ids = [cur.int32() for _ in range(ndims)]
        if any(not 0 <= i < len(dim_names) for i in ids):
            raise MalformedHeader(f"variable {name!r} references unknown dimension")
        vattrs = cur.attrs()
        nc_type, vsize, begin = cur.int32(), cur.int32(), cur.int32()
        if nc_type not in NC_DTYPES:
            raise MalformedHeader(f"variable {name!r} has unsupported type {nc_type}")
        specs.append((name, tuple(dim_names[i] for i in ids), vattrs, nc_type, vsize, begin))

    header_end = cur.pos
    variables: dict[str, Variable] = {}
    for name, vdims, vattrs, nc_type, vsize, begin in specs:
        dt = NC_DTYPES[nc_type]
        shape = tuple(dims[d] for d in vdims)
        nbytes = int(np.prod(shape, dtype=np.int64)) * dt.itemsize
        if begin < header_end:
            raise MalformedHeader(f"variable {name!r} data overlaps the header")
        if vsize != min(nbytes + _pad4(nbytes), MAX_OFFSET):
            raise MalformedHeader(f"variable {name!r} vsize {vsize} disagrees with its shape")
        if begin + nbytes + _pad4(nbytes) > len(data):
            raise Truncated(f"variable {name!r} data runs past end of file")
        arr = np.frombuffer(data, dtype=dt, count=nbytes // dt.itemsize, offset=begin)
        variables[name] = Variable(vdims, arr.reshape(shape).copy(), vattrs)
    return Dataset(dims, variables, gattrs)


def header_offsets(data: bytes) -> list[tuple[str, int, int]]:
    """(name, begin, vsize) triples as declared in the header."""
    data = bytes(data)
    cur = _Cursor(data)
    cur.take(8)
    for _ in range(cur.list_header(NC_DIMENSION)):
        cur.name()
        cur.int32()
    cur.attrs()
    out = []
    for _ in range(cur.list_header(NC_VARIABLE)):
        name = cur.name()
        for _ in range(cur.count()):
            cur.int32()
        cur.attrs()
        _t, vsize, begin = cur.int32(), cur.int32(), cur.int32()
        out.append((name, begin, vsize))
    return out
