"""Time scan + grid on a synthetic corpus at several worker counts.

Defaults match the 20,000-tile / 50,000-detection smoke test. Prints wall
times and whether counts.nc is byte-identical across worker counts.
"""
import argparse
import os
import tempfile
import time

from gridvec.cli import main

E0, N0 = 8585989.719322871, 3317000.0


def corpus(out, tiles_x, tiles_y, tile_px, objects, seed):
    size = tile_px * 0.5
    aoi = f"{E0},{N0},{E0 + tiles_x * size},{N0 + tiles_y * size}"
    per = objects // 4
    counts = f"{per},{per},{per},{objects - 3 * per}"
    t0 = time.perf_counter()
    assert main(["synth", "--out", out, "--seed", str(seed), "--aoi", aoi, "--tile-px",
                 f"{tile_px},{tile_px}", "--objects", counts]) == 0
    print(f"synth: {time.perf_counter() - t0:.1f} s")


def timed_run(scene, out, workers):
    t0 = time.perf_counter()
    assert main(["scan", "--tiles", os.path.join(scene, "tiles"), "--labels",
                 os.path.join(scene, "labels"), "--out", out, "--workers", str(workers)]) == 0
    assert main(["grid", "--out", out, "--workers", str(workers), "--timestamp",
                 "2024-01-01T00:00:00+00:00"]) == 0
    return time.perf_counter() - t0


if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--tiles-x", type=int, default=200)
    ap.add_argument("--tiles-y", type=int, default=100)
    ap.add_argument("--tile-px", type=int, default=32)
    ap.add_argument("--objects", type=int, default=50_000)
    ap.add_argument("--seed", type=int, default=7)
    ap.add_argument("--workers", default="1,2,4,8")
    args = ap.parse_args()
    with tempfile.TemporaryDirectory() as tmp:
        scene = os.path.join(tmp, "scene")
        corpus(scene, args.tiles_x, args.tiles_y, args.tile_px, args.objects, args.seed)
        outputs = {}
        for w in (int(v) for v in args.workers.split(",")):
            out = os.path.join(tmp, f"w{w}")
            print(f"workers={w}: {timed_run(scene, out, w):.1f} s")
            with open(os.path.join(out, "counts.nc"), "rb") as fh:
                outputs[w] = fh.read()
        print("identical counts.nc:", len(set(outputs.values())) == 1)
