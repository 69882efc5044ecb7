import os

import numpy as np
import pytest

from conftest import REF_CORNERS, REF_NAME, REF_TRANSFORM
from gridvec.cli import main
from gridvec.detect_io import ClassMap
from gridvec.geotiff_meta import TileMeta, write_synthetic_geotiff
from gridvec.inventory import grid_from_dataset
from gridvec.netcdf import read_netcdf
from gridvec.projection import ProjectedPoint
from gridvec.render import encode_ppm, render_heatmap
from gridvec.synth import SceneSpec, generate_scene, oracle_counts

TS = "2024-05-01T00:00:00+00:00"
E0, N0 = 8585989.719322871, 3317000.0
SYNTH_AOI = f"{E0},{N0},{E0 + 160},{N0 + 128}"  # 5 x 4 tiles of 32 m
SYNTH_ARGS = ["--seed", "11", "--aoi", SYNTH_AOI, "--tile-px", "64,64", "--pixel-size", "0.5",
              "--objects", "30,40,50,60", "--cell-size", "50"]


def scene_for_args():
    spec = SceneSpec(11, ProjectedPoint(E0, N0), ProjectedPoint(E0 + 160, N0 + 128), 50.0,
                     64, 64, (0.5, -0.5), (30, 40, 50, 60))
    return generate_scene(spec)


@pytest.fixture
def synth_dir(tmp_path):
    out = tmp_path / "scene"
    assert main(["synth", "--out", str(out)] + SYNTH_ARGS) == 0
    return out


def read_counts(path):
    return grid_from_dataset(read_netcdf(path.read_bytes()))


def run_grid(scene_dir, out, *extra):
    return main(["grid", "--tiles", str(scene_dir / "tiles"), "--labels", str(scene_dir / "labels"),
                 "--classes", str(scene_dir / "data.yaml"), "--aoi", SYNTH_AOI, "--cell-size", "50",
                 "--timestamp", TS, "--out", str(out), *extra])


def test_synth_is_deterministic(tmp_path, synth_dir):
    again = tmp_path / "again"
    assert main(["synth", "--out", str(again)] + SYNTH_ARGS) == 0
    for sub in ("tiles", "labels"):
        names = sorted(os.listdir(synth_dir / sub))
        assert names == sorted(os.listdir(again / sub))
        for n in names:
            assert (synth_dir / sub / n).read_bytes() == (again / sub / n).read_bytes()
    assert (synth_dir / "truth.tsv").read_text() == (again / "truth.tsv").read_text()
    assert len(os.listdir(synth_dir / "tiles")) == 20
    assert len((synth_dir / "truth.tsv").read_text().splitlines()) == 181


def test_synth_zero_objects_and_bad_spec(tmp_path):
    out = tmp_path / "z"
    assert main(["synth", "--out", str(out), "--aoi", SYNTH_AOI, "--objects", "0,0,0,0"]) == 0
    assert all((out / "labels" / n).read_text() == "" for n in os.listdir(out / "labels"))
    assert main(["synth", "--out", str(out), "--aoi", f"{E0},{N0},{E0 + 33},{N0 + 32}"]) == 4
    assert main(["synth", "--out", str(out), "--objects", "1,x"]) == 4


def test_scan(tmp_path, synth_dir):
    out = tmp_path / "run"
    assert main(["scan", "--tiles", str(synth_dir / "tiles"), "--labels", str(synth_dir / "labels"),
                 "--out", str(out)]) == 0
    lines = (out / "manifest.tsv").read_text().splitlines()
    assert len(lines) == 21
    assert all(line.split("\t")[2] == "ok" for line in lines[1:])


def test_scan_empty_and_missing(tmp_path):
    empty = tmp_path / "empty"
    empty.mkdir()
    assert main(["scan", "--tiles", str(empty), "--out", str(tmp_path / "o")]) == 2
    assert (tmp_path / "o" / "manifest.tsv").read_text().count("\n") == 1
    assert main(["scan", "--tiles", str(tmp_path / "nope"), "--out", str(tmp_path / "o")]) == 2


def test_scan_reference_tile(tmp_path, ref_meta):
    tiles = tmp_path / "tiles"
    tiles.mkdir()
    (tiles / REF_NAME).write_bytes(write_synthetic_geotiff(ref_meta))
    (tiles / "28.542510_77.130210.txt").write_text("2 0.5 0.5 0.1 0.1 0.9\n")
    assert main(["scan", "--tiles", str(tiles), "--out", str(tmp_path)]) == 0
    row = (tmp_path / "manifest.tsv").read_text().splitlines()[1].split("\t")
    assert row[2] == "ok" and row[3:5] == ["1169", "826"] and row[10] == "4"


@pytest.mark.parametrize("threshold", ["0", "0.25", "0.5", "0.9"])
def test_grid_equals_oracle(tmp_path, synth_dir, threshold):
    out = tmp_path / "run"
    assert run_grid(synth_dir, out, "--conf", threshold) == 0
    got = read_counts(out / "counts.nc")
    scene = scene_for_args()
    want = oracle_counts(scene, got.spec, float(threshold))
    assert got == want
    report = dict(line.split("\t", 1) for line in (out / "report.txt").read_text().splitlines())
    total = sum(int(report[k]) for k in ("accepted", "skipped_out_of_grid", "below_threshold",
                                         "parse_errors"))
    assert total == int(report["label_lines"]) == 180


def test_grid_from_tiles_and_manifest(tmp_path, synth_dir):
    a, b = tmp_path / "a", tmp_path / "b"
    assert run_grid(synth_dir, a) == 0
    assert main(["scan", "--tiles", str(synth_dir / "tiles"), "--labels", str(synth_dir / "labels"),
                 "--out", str(b)]) == 0
    assert main(["grid", "--out", str(b), "--aoi", "from-tiles", "--cell-size", "50",
                 "--timestamp", TS]) == 0
    # from-tiles grows 160 x 128 m up to 4 x 3 cells, same origin
    ga, gb = read_counts(a / "counts.nc"), read_counts(b / "counts.nc")
    assert (gb.spec.n_cols, gb.spec.n_rows) == (4, 3)
    np.testing.assert_array_equal(ga.counts, gb.counts)


def test_grid_worker_determinism(tmp_path, synth_dir):
    outs = []
    for workers in (1, 3, 8):
        out = tmp_path / f"w{workers}"
        assert run_grid(synth_dir, out, "--workers", str(workers)) == 0
        outs.append((out / "counts.nc").read_bytes())
    assert outs[0] == outs[1] == outs[2]


def test_grid_env_workers(tmp_path, synth_dir, monkeypatch):
    monkeypatch.setenv("GRIDVEC_WORKERS", "2")
    assert run_grid(synth_dir, tmp_path / "env") == 0
    assert run_grid(synth_dir, tmp_path / "one", "--workers", "1") == 0
    assert (tmp_path / "env" / "counts.nc").read_bytes() == (tmp_path / "one" / "counts.nc").read_bytes()


def test_grid_zero_detections(tmp_path):
    scene = tmp_path / "z"
    assert main(["synth", "--out", str(scene), "--aoi", SYNTH_AOI, "--objects", "0,0,0,0"]) == 0
    assert run_grid(scene, tmp_path / "o") == 0
    ds = read_netcdf((tmp_path / "o" / "counts.nc").read_bytes())
    for name in ClassMap().names:
        assert not ds.variables[f"count_{name}"].data.any()


def test_grid_bad_tile_and_skip(tmp_path, synth_dir):
    label = sorted(os.listdir(synth_dir / "labels"))[0]
    with open(synth_dir / "labels" / label, "a") as fh:
        fh.write("9 0.5 0.5 0.1 0.1 0.5\n")
    assert run_grid(synth_dir, tmp_path / "strict") == 3
    assert not (tmp_path / "strict" / "counts.nc").exists()
    assert run_grid(synth_dir, tmp_path / "skip", "--skip-bad") == 0
    report = dict(line.split("\t", 1) for line in
                  (tmp_path / "skip" / "report.txt").read_text().splitlines() if not line.startswith("error"))
    assert report["bad_tiles"] == "1"
    total = sum(int(report[k]) for k in ("accepted", "skipped_out_of_grid", "below_threshold",
                                         "parse_errors"))
    assert total == int(report["label_lines"]) == 181


def test_grid_config_errors(tmp_path, synth_dir):
    assert run_grid(synth_dir, tmp_path / "o", "--aoi", "1,2,3") == 4
    assert run_grid(synth_dir, tmp_path / "o", "--aoi", "5,5,1,1") == 4
    bad = tmp_path / "bad.yaml"
    bad.write_text("nc: 3\nnames: ['a', 'b']\n")
    assert main(["grid", "--tiles", str(synth_dir / "tiles"), "--classes", str(bad),
                 "--out", str(tmp_path / "o")]) == 4
    assert main(["grid", "--tiles", str(tmp_path / "missing"), "--out", str(tmp_path / "o")]) == 2


def write_factors(path, values):
    path.write_text("".join(f"{k} = {v!r}\n" for k, v in values.items()))


@pytest.mark.parametrize("kind", ["ones", "zeros", "random"])
def test_emit(tmp_path, synth_dir, kind):
    out = tmp_path / "run"
    assert run_grid(synth_dir, out) == 0
    names = ClassMap().names
    if kind == "ones":
        factors = {n: 1.0 for n in names}
    elif kind == "zeros":
        factors = {n: 0.0 for n in names}
    else:
        rng = np.random.default_rng(3)
        factors = {n: float(rng.uniform(0, 100)) for n in names}
    write_factors(tmp_path / "f.txt", factors)
    assert main(["emit", "--out", str(out), "--factors", str(tmp_path / "f.txt"),
                 "--timestamp", TS]) == 0
    ds = read_netcdf((out / "emissions.nc").read_bytes())
    for n in names:
        counts = ds.variables[f"count_{n}"].data
        emis = ds.variables[f"emis_{n}"].data
        assert np.array_equal(emis, np.float32(counts.astype(np.float64) * factors[n]))
    assert "latitude" in ds.variables and "longitude" in ds.variables


def test_emit_errors(tmp_path, synth_dir):
    out = tmp_path / "run"
    assert run_grid(synth_dir, out) == 0
    assert main(["emit", "--out", str(out)]) == 4
    assert main(["emit", "--out", str(out), "--factors", str(tmp_path / "none.txt")]) == 4
    (tmp_path / "f.txt").write_text("car = 1\n")
    assert main(["emit", "--out", str(out), "--factors", str(tmp_path / "f.txt")]) == 4
    write_factors(tmp_path / "g.txt", {n: 1.0 for n in ClassMap().names})
    assert main(["emit", "--out", str(tmp_path / "empty"), "--factors", str(tmp_path / "g.txt")]) == 2


def test_render_matches_oracle(tmp_path, synth_dir):
    out = tmp_path / "run"
    assert run_grid(synth_dir, out) == 0
    assert main(["render", "--out", str(out), "--plane", "total", "--cell-px", "5"]) == 0
    assert main(["render", "--out", str(out), "--plane", "bus", "--cell-px", "5"]) == 0
    got = read_counts(out / "counts.nc")
    oracle = oracle_counts(scene_for_args(), got.spec, 0.25)
    assert (out / "heatmap_total.ppm").read_bytes() == encode_ppm(render_heatmap(oracle, "total", 5))
    assert (out / "heatmap_bus.ppm").read_bytes() == encode_ppm(render_heatmap(oracle, "bus", 5))
    first = (out / "heatmap_total.ppm").read_bytes()
    assert main(["render", "--out", str(out), "--plane", "total", "--cell-px", "5"]) == 0
    assert (out / "heatmap_total.ppm").read_bytes() == first


def test_render_errors(tmp_path, synth_dir):
    out = tmp_path / "run"
    assert main(["render", "--out", str(out)]) == 2
    assert run_grid(synth_dir, out) == 0
    assert main(["render", "--out", str(out), "--plane", "truck"]) == 4
    (out / "junk.nc").write_bytes(b"CDF\x02" + b"\0" * 40)
    assert main(["render", "--out", str(out), "--counts", str(out / "junk.nc")]) == 3


def make_eval_dirs(tmp_path, gt, preds):
    g, p = tmp_path / "gt", tmp_path / "pred"
    g.mkdir(exist_ok=True)
    p.mkdir(exist_ok=True)
    for name, lines in gt.items():
        (g / f"{name}.txt").write_text("".join(line + "\n" for line in lines))
    for name, lines in preds.items():
        (p / f"{name}.txt").write_text("".join(line + "\n" for line in lines))
    return g, p


GT = {"img1": ["0 0.2 0.2 0.1 0.1", "1 0.6 0.6 0.1 0.1", "2 0.8 0.2 0.1 0.1"],
      "img2": ["2 0.3 0.7 0.2 0.2", "3 0.7 0.3 0.2 0.2"]}


def test_eval_perfect(tmp_path, capsys):
    preds = {k: [line + " 1.0" for line in v] for k, v in GT.items()}
    g, p = make_eval_dirs(tmp_path, GT, preds)
    assert main(["eval", "--gt", str(g), "--pred", str(p), "--out", str(tmp_path / "o")]) == 0
    assert "peak_f1=1.000 at conf=0.000" in capsys.readouterr().out
    cm = (tmp_path / "o" / "confusion.tsv").read_text().splitlines()
    assert cm[1].split("\t")[1:] == ["1", "0", "0", "0", "0"]
    assert (tmp_path / "o" / "f1_curve.ppm").read_bytes().startswith(b"P6\n400 300\n255\n")
    rows = (tmp_path / "o" / "metrics.tsv").read_text().splitlines()
    assert len(rows) == 1002


def test_eval_empty_preds(tmp_path, capsys):
    g, p = make_eval_dirs(tmp_path, GT, {k: [] for k in GT})
    assert main(["eval", "--gt", str(g), "--pred", str(p), "--out", str(tmp_path / "o")]) == 0
    assert "peak_f1=0.000 at conf=0.000" in capsys.readouterr().out
    cm = (tmp_path / "o" / "confusion.tsv").read_text().splitlines()
    assert cm[-1].split("\t")[1:] == ["1", "1", "2", "1", "0"]


def test_eval_constructed_matches_library(tmp_path, capsys):
    from gridvec.detect_io import parse_yolo_labels
    from gridvec.evalkit import LabeledBox, f1_confidence_curve, peak_f1
    preds = {"img1": ["0 0.2 0.21 0.1 0.1 0.9", "0 0.6 0.6 0.1 0.1 0.4", "2 0.8 0.2 0.1 0.1 0.2"],
             "img2": ["2 0.3 0.7 0.2 0.2 0.75", "2 0.31 0.7 0.2 0.2 0.6", "3 0.1 0.1 0.05 0.05 0.55"]}
    g, p = make_eval_dirs(tmp_path, GT, preds)
    assert main(["eval", "--gt", str(g), "--pred", str(p), "--out", str(tmp_path / "o")]) == 0
    cm = ClassMap()
    gt_b = {k: [LabeledBox(d.class_id, d.cx, d.cy, d.w, d.h)
                for d in parse_yolo_labels("\n".join(v), cm)] for k, v in GT.items()}
    pr_b = {k: [LabeledBox.from_detection(d) for d in parse_yolo_labels("\n".join(v), cm)]
            for k, v in preds.items()}
    t, f = peak_f1(f1_confidence_curve(gt_b, pr_b, 4))
    assert f"peak_f1={f:.3f} at conf={t:.3f}" in capsys.readouterr().out


def test_eval_errors(tmp_path):
    g, p = make_eval_dirs(tmp_path, {"a": []}, {"b": []})
    assert main(["eval", "--gt", str(g), "--pred", str(p), "--out", str(tmp_path / "o")]) == 2
    assert main(["eval", "--gt", str(tmp_path / "x"), "--pred", str(p)]) == 2
    (p / "a.txt").write_text("0 0.5 0.5 0.1\n")
    assert main(["eval", "--gt", str(g), "--pred", str(p), "--out", str(tmp_path / "o")]) == 3


def test_validate_reference_tile(tmp_path, ref_meta, capsys):
    (tmp_path / REF_NAME).write_bytes(write_synthetic_geotiff(ref_meta))
    assert main(["validate", "--tiles", str(tmp_path)]) == 0
    out = capsys.readouterr().out
    assert "Size is 1169, 826" in out
    assert "Origin = (8585989.719322871416807,3317620.858127291314304)" in out
    assert "Pixel Size = (0.181473787118728,-0.181598062952868)" in out
    for label, _, _, e, n, lon, lat in REF_CORNERS:
        line = f"{label:<12}({e:12.3f},{n:12.3f}) ( {lon}, {lat})"
        assert line in out, line
    # exact gdalinfo text for this corner
    assert "Lower Right ( 8586201.862, 3317470.858) ( 77d 7'52.19\"E, 28d32'30.91\"N)" in out
    assert "Check filename_center: pass" in out


def test_validate_mislabeled(tmp_path, ref_meta, capsys):
    wrong = TileMeta("28.542510_77.140210.tiff", REF_TRANSFORM, 3857, None, 4)
    (tmp_path / wrong.source_id).write_bytes(write_synthetic_geotiff(wrong))
    assert main(["validate", "--tiles", str(tmp_path)]) == 1
    out = capsys.readouterr().out
    assert "Check filename_center: fail delta=0.01" in out


def test_validate_synth_and_errors(tmp_path, synth_dir):
    assert main(["validate", "--tiles", str(synth_dir / "tiles")]) == 0
    empty = tmp_path / "e"
    empty.mkdir()
    assert main(["validate", "--tiles", str(empty)]) == 2
    (empty / "broken.tif").write_bytes(b"II*\0garbage")
    assert main(["validate", "--tiles", str(empty)]) == 1
