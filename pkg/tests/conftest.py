import pytest

from gridvec.geotiff_meta import GeoTransform, TileMeta

REF_NAME = "28.542510_77.130210.tiff"
REF_TRANSFORM = GeoTransform(
    origin_easting=8585989.719322871416807,
    origin_northing=3317620.858127291314304,
    pixel_size_x=0.181473787118728,
    pixel_size_y=-0.181598062952868,
    width=1169,
    height=826,
)

# gdalinfo corner block for the tile above: (label, px, py, E, N, lon DMS, lat DMS)
REF_CORNERS = [
    ("Upper Left", 0, 0, 8585989.719, 3317620.858, "77d 7'45.33\"E", "28d32'35.17\"N"),
    ("Lower Left", 0, 826, 8585989.719, 3317470.858, "77d 7'45.33\"E", "28d32'30.91\"N"),
    ("Upper Right", 1169, 0, 8586201.862, 3317620.858, "77d 7'52.19\"E", "28d32'35.17\"N"),
    ("Lower Right", 1169, 826, 8586201.862, 3317470.858, "77d 7'52.19\"E", "28d32'30.91\"N"),
    ("Center", 584.5, 413, 8586095.791, 3317545.858, "77d 7'48.76\"E", "28d32'33.04\"N"),
]


@pytest.fixture
def ref_meta():
    return TileMeta(REF_NAME, REF_TRANSFORM, 3857, (28.542510, 77.130210), 4)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)
