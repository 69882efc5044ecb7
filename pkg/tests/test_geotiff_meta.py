import struct

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gridvec.geotiff_meta import (GeoTransform, InvalidMeta, MalformedTiff, MissingGeoTag,
                                  PatternMismatch, TileMeta, UnsupportedCrs, UnsupportedLayout,
                                  parse_filename_center, parse_tiff_metadata, validate_tile,
                                  write_synthetic_geotiff)

from conftest import REF_NAME


def small_meta(**kw):
    t = GeoTransform(kw.pop("e", 0.0), kw.pop("n", 0.0), kw.pop("sx", 1.0), kw.pop("sy", -1.0),
                     kw.pop("w", 1), kw.pop("h", 1))
    return TileMeta("", t, 3857, None, kw.pop("bands", 1))


transforms = st.builds(
    GeoTransform,
    st.floats(-2e7, 2e7, allow_nan=False),
    st.floats(-2e7, 2e7, allow_nan=False),
    st.floats(1e-6, 1e3),
    st.floats(-1e3, -1e-6),
    st.integers(1, 40),
    st.integers(1, 40),
)
metas = st.builds(lambda t, b: TileMeta("", t, 3857, None, b), transforms, st.integers(1, 5))


def test_reference_tile_round_trip(ref_meta):
    data = write_synthetic_geotiff(ref_meta, [0, 0, 0, 255])
    got = parse_tiff_metadata(data, REF_NAME)
    assert got == ref_meta
    t = got.transform
    assert (t.width, t.height, got.band_count, got.crs_epsg) == (1169, 826, 4, 3857)
    assert t.origin_easting == 8585989.719322871416807
    assert t.origin_northing == 3317620.858127291314304
    assert t.pixel_size_x == 0.181473787118728
    assert t.pixel_size_y == -0.181598062952868
    assert t.origin_easting + t.width / 2 * t.pixel_size_x == pytest.approx(8586095.791, abs=1e-3)


def test_one_by_one_identity():
    m = small_meta()
    got = parse_tiff_metadata(write_synthetic_geotiff(m))
    assert got == m and got.band_count == 1


@settings(max_examples=500)
@given(metas)
def test_round_trip_bit_exact(m):
    data = write_synthetic_geotiff(m, 7)
    assert parse_tiff_metadata(data) == m
    assert write_synthetic_geotiff(m, 7) == data


@settings(max_examples=100)
@given(metas)
def test_big_endian_same_meta(m):
    le = parse_tiff_metadata(write_synthetic_geotiff(m, byteorder="<"))
    be_bytes = write_synthetic_geotiff(m, byteorder=">")
    assert be_bytes[:4] == b"MM\x00\x2a"
    assert parse_tiff_metadata(be_bytes) == le


def test_header_layout():
    data = write_synthetic_geotiff(small_meta(w=3, h=2, bands=3))
    assert data[:4] == b"II\x2a\x00"
    (ifd,) = struct.unpack_from("<I", data, 4)
    (n,) = struct.unpack_from("<H", data, ifd)
    tags = [struct.unpack_from("<H", data, ifd + 2 + 12 * i)[0] for i in range(n)]
    assert tags == sorted(tags)
    for required in (256, 257, 258, 259, 277, 33550, 33922, 34735):
        assert required in tags
    assert data.endswith(b"\0" * 18)


def test_geokey_header_and_compression():
    m = small_meta(w=2, h=2)
    data = write_synthetic_geotiff(m)
    (ifd,) = struct.unpack_from("<I", data, 4)
    (n,) = struct.unpack_from("<H", data, ifd)
    for i in range(n):
        tag, ftype, count, val = struct.unpack_from("<HHII", data, ifd + 2 + 12 * i)
        if tag == 259:
            assert val & 0xFFFF == 1
        if tag == 34735:
            keys = struct.unpack_from(f"<{count}H", data, val)
            assert keys[:4] == (1, 1, 0, (count - 4) // 4)
            entries = [keys[4 + 4 * k: 8 + 4 * k] for k in range((count - 4) // 4)]
            assert (3072, 0, 1, 3857) in entries


def test_truncation_sweep_never_crashes(ref_meta):
    m = small_meta(w=5, h=3, bands=4)
    data = write_synthetic_geotiff(m)
    for cut in range(len(data)):
        with pytest.raises(MalformedTiff):
            parse_tiff_metadata(data[:cut])


@settings(max_examples=300)
@given(st.binary(max_size=300))
def test_random_bytes_fail_cleanly(blob):
    try:
        parse_tiff_metadata(blob)
    except (MalformedTiff, MissingGeoTag, UnsupportedCrs, UnsupportedLayout):
        pass


@settings(max_examples=300)
@given(st.data())
def test_bit_flips_fail_cleanly(data):
    raw = bytearray(write_synthetic_geotiff(small_meta(w=2, h=2)))
    for _ in range(data.draw(st.integers(1, 4))):
        i = data.draw(st.integers(0, len(raw) - 1))
        raw[i] = data.draw(st.integers(0, 255))
    try:
        parse_tiff_metadata(bytes(raw))
    except (MalformedTiff, MissingGeoTag, UnsupportedCrs, UnsupportedLayout):
        pass


def _patch_tag(data: bytes, tag_id: int, new_tag: int | None = None, value_patch=None) -> bytes:
    data = bytearray(data)
    (ifd,) = struct.unpack_from("<I", data, 4)
    (n,) = struct.unpack_from("<H", data, ifd)
    for i in range(n):
        pos = ifd + 2 + 12 * i
        tag, ftype, count, val = struct.unpack_from("<HHII", data, pos)
        if tag == tag_id:
            if new_tag is not None:
                struct.pack_into("<H", data, pos, new_tag)
            if value_patch is not None:
                value_patch(data, val)
    return bytes(data)


def test_bad_magic():
    data = bytearray(write_synthetic_geotiff(small_meta()))
    data[2] = 41
    with pytest.raises(MalformedTiff):
        parse_tiff_metadata(bytes(data))


def test_bigtiff_rejected():
    with pytest.raises(MalformedTiff):
        parse_tiff_metadata(b"II\x2b\x00\x08\x00\x00\x00" + b"\0" * 16)


@pytest.mark.parametrize("tag", [33550, 33922, 34735])
def test_missing_geotag(tag):
    # renumber to a private tag id; IFD order is irrelevant to the reader
    data = _patch_tag(write_synthetic_geotiff(small_meta(w=2, h=2)), tag, new_tag=65000)
    with pytest.raises(MissingGeoTag):
        parse_tiff_metadata(data)


def test_unsupported_crs():
    def to_4326(buf, offset):
        keys = list(struct.unpack_from("<16H", buf, offset))
        keys[15] = 4326
        struct.pack_into("<16H", buf, offset, *keys)

    data = _patch_tag(write_synthetic_geotiff(small_meta(w=2, h=2)), 34735, value_patch=to_4326)
    with pytest.raises(UnsupportedCrs):
        parse_tiff_metadata(data)


def test_tiepoint_not_at_origin():
    def shift(buf, offset):
        struct.pack_into("<d", buf, offset, 10.0)

    data = _patch_tag(write_synthetic_geotiff(small_meta(w=2, h=2)), 33922, value_patch=shift)
    with pytest.raises(UnsupportedLayout):
        parse_tiff_metadata(data)


@pytest.mark.parametrize("bad", [
    dict(sx=0.0), dict(sx=-1.0), dict(sy=1.0), dict(sy=0.0), dict(w=0), dict(h=0),
])
def test_writer_rejects_invalid(bad):
    with pytest.raises(InvalidMeta):
        write_synthetic_geotiff(small_meta(**bad))


@pytest.mark.parametrize("name,expected", [
    ("28.542510_77.130210.tiff", (28.542510, 77.130210)),
    ("0.000000_0.000000.tiff", (0.0, 0.0)),
    ("/some/dir/-33.900000_151.200000.tif", (-33.9, 151.2)),
])
def test_filename_center(name, expected):
    assert parse_filename_center(name) == expected


@pytest.mark.parametrize("name", ["image_0042.tiff", "28_77.tiff", "28.5_77.1_x.tiff", "95.0_10.0.tiff"])
def test_filename_center_mismatch(name):
    with pytest.raises(PatternMismatch):
        parse_filename_center(name)


def test_non_conforming_name_is_not_fatal():
    data = write_synthetic_geotiff(small_meta())
    assert parse_tiff_metadata(data, "image_0042.tiff").filename_center is None


def test_validate_reference_tile(ref_meta):
    report = validate_tile(ref_meta, 1e-4)
    assert report.ok
    center = report.get("filename_center")
    assert center.status == "pass" and center.delta <= 2e-6


def test_validate_skips_missing_center(ref_meta):
    m = TileMeta("x.tiff", ref_meta.transform, 3857, None, 4)
    report = validate_tile(m)
    assert report.ok and report.get("filename_center").status == "skipped"


def test_validate_flags_offset_center(ref_meta):
    lat, lon = ref_meta.filename_center
    m = TileMeta("x.tiff", ref_meta.transform, 3857, (lat + 0.01, lon), 4)
    report = validate_tile(m, 1e-4)
    check = report.get("filename_center")
    assert not report.ok and check.status == "fail"
    assert check.delta == pytest.approx(0.01, abs=1e-5)
