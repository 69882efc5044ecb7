"""Rebuild the 1169x826 reference tile header and print its gdalinfo-style block."""
import argparse
import os
import tempfile

from gridvec.cli import main
from gridvec.geotiff_meta import GeoTransform, TileMeta, write_synthetic_geotiff

NAME = "28.542510_77.130210.tiff"
TRANSFORM = GeoTransform(8585989.719322871416807, 3317620.858127291314304,
                         0.181473787118728, -0.181598062952868, 1169, 826)


def run(out_dir: str) -> int:
    meta = TileMeta(NAME, TRANSFORM, 3857, (28.542510, 77.130210), 4)
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, NAME), "wb") as fh:
        fh.write(write_synthetic_geotiff(meta))
    return main(["validate", "--tiles", out_dir])


if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", help="where to keep the tile (default: temp dir)")
    args = ap.parse_args()
    if args.out:
        raise SystemExit(run(args.out))
    with tempfile.TemporaryDirectory() as tmp:
        raise SystemExit(run(tmp))
