import csv
import io
import math
import subprocess
import sys

import numpy as np
import pytest

from hiermatch import cli
from hiermatch.bench import CSV_HEADER, BenchConfig, report_csv, run_benchmark, sample_points, thread_count
from hiermatch.corpus import textured_image
from hiermatch.imagekit import CoordMap, load_image, save_image
from hiermatch.template import load_template
from hiermatch.topology import StackConfig

SMALL = ["--layers", "4", "--sigma", "2"]
SMALL_CFG = StackConfig(num_layers=4, base_sigma=2.0)


@pytest.fixture(scope="module")
def small_bench():
    cfg = BenchConfig(n_points=6, seed=7, stack=SMALL_CFG, corpus_size=256)
    return run_benchmark(cfg)


def test_report_structure(small_bench):
    text = report_csv(small_bench)
    rows = list(csv.reader(io.StringIO(text)))
    assert tuple(rows[0]) == CSV_HEADER
    assert len(rows) == 1 + 18
    assert [r[0] for r in rows[1::2]][0].startswith("A_") and rows[-1][0].startswith("I_")
    assert [r[1] for r in rows[1:3]] == ["19", "1"]
    for r in rows[1:]:
        assert r[3] == f"{float(r[3]):.1f}" and 0.0 <= float(r[3]) <= 100.0
        assert float(r[3]) == pytest.approx(100 * int(r[2]) / 6, abs=0.05)


def test_report_is_reproducible(small_bench):
    again = run_benchmark(small_bench.config)
    assert report_csv(again, with_timing=False) == report_csv(small_bench, with_timing=False)


def test_rate_ordering_slack(small_bench):
    for name in {r.transform for r in small_bench.rows}:
        assert small_bench.row(name, 19).rate_pct >= small_bench.row(name, 1).rate_pct - 5 - 100 / 6


def test_sample_points_margin():
    pts = sample_points((256, 256), SMALL_CFG, 50, 1)
    assert len(pts) == 50 and all(40 <= x <= 215 and 40 <= y <= 215 for x, y in pts)
    with pytest.raises(ValueError):
        sample_points((60, 60), SMALL_CFG, 1, 0)


def test_bench_config_validation():
    with pytest.raises(ValueError):
        BenchConfig(n_points=0)
    with pytest.raises(ValueError):
        BenchConfig(tolerance=0)


def test_thread_count_env(monkeypatch):
    monkeypatch.setenv("HIERMATCH_THREADS", "3")
    assert thread_count() == 3
    monkeypatch.setenv("HIERMATCH_THREADS", "0")
    assert thread_count() >= 1


# -- CLI --------------------------------------------------------------------


@pytest.fixture(scope="module")
def ref_pgm(tmp_path_factory):
    p = tmp_path_factory.mktemp("cli") / "ref.pgm"
    save_image(textured_image(256, seed=1), p)
    return p


def test_cli_transform_writes_image_and_map(tmp_path, ref_pgm, capsys):
    out, mp = tmp_path / "half.pgm", tmp_path / "map.csv"
    assert cli.main(["transform", "--image", str(ref_pgm), "--spec", "scale:0.5", "--out", str(out), "--map", str(mp)]) == 0
    assert load_image(out).shape == (128, 128)
    head, row = mp.read_text().splitlines()
    assert head == "a,b,c,d,tx,ty"
    assert CoordMap.from_csv_row(row) == CoordMap((0.5, 0.0, 0.0, 0.5))


def test_cli_two_objects_threshold(tmp_path, capsys):
    obj = textured_image(256, seed=1)
    ref = tmp_path / "ref.pgm"
    save_image(obj, ref)
    query = tmp_path / "two.pgm"
    save_image(np.hstack([load_image(ref), load_image(ref)]), query)
    t = tmp_path / "t.hmtp"
    # 95.5 and 351.5 are both seed-grid centers of a 64 px grid
    assert cli.main(["train", "--image", str(ref), "--points", "95.5,95.5", "--out", str(t), *SMALL]) == 0
    assert load_template(t).key_points[0].training_location == (95.5, 95.5)
    out, over = tmp_path / "c.csv", tmp_path / "o.pgm"
    argv = ["find", "--image", str(query), "--template", str(t), "--subregion", "64", "--threshold", "0.3",
            "--out", str(out), "--overlay", str(over)]
    assert cli.main(argv) == 0
    rows = list(csv.DictReader(out.open()))
    assert tuple(rows[0].keys()) == cli.CANDIDATE_COLUMNS
    assert len(rows) >= 2
    xs = sorted(float(r["fl_x"]) for r in rows if float(r["eval"]) >= 0.3)
    assert any(math.isclose(x, 95.5, abs_tol=2) for x in xs) and any(math.isclose(x, 351.5, abs_tol=2) for x in xs)
    assert load_image(over).shape == (256, 512)


def test_cli_bench_and_geometry(tmp_path, ref_pgm, capsys):
    out = tmp_path / "b.csv"
    argv = ["bench", "--image", str(ref_pgm), "--points", "3", "--seed", "7", "--transforms", "scale:0.7,rotate:10",
            "--out", str(out), *SMALL]
    assert cli.main(argv) == 0
    assert len(out.read_text().splitlines()) == 1 + 4
    assert "rate T=19 %" in capsys.readouterr().out
    geo = tmp_path / "g.csv"
    kdir = tmp_path / "k"
    assert cli.main(["inspect-geometry", "--out", str(geo), "--dump-kernels", str(kdir), "--layers", "2"]) == 0
    assert len(geo.read_text().splitlines()) == 1 + 2 * 38
    assert np.loadtxt(kdir / "kernel_m1_o0.csv", delimiter=",").shape == (37, 37)  # sigma 3: half width 18


def test_cli_errors_are_one_line(tmp_path, capsys):
    assert cli.main(["transform", "--image", str(tmp_path / "missing.pgm"), "--spec", "scale:2", "--out", "x.pgm"]) == 1
    err = capsys.readouterr().err.strip()
    assert err.startswith("hiermatch transform: error:") and "\n" not in err


def test_cli_usage_error_exit_code():
    with pytest.raises(SystemExit) as e:
        cli.main(["find", "--bogus"])
    assert e.value.code == 2


def test_cli_help_lists_defaults():
    r = subprocess.run([sys.executable, "-m", "hiermatch.cli", "find", "--help"], capture_output=True, text=True)
    assert r.returncode == 0
    for flag in ("--subregion", "--scan-layer", "--eval-elements", "--threshold", "--overlay"):
        assert flag in r.stdout
    assert "default" in r.stdout
