import csv
import json
import math
import subprocess
import sys

import pytest

from speciso.cli import main


def run(args, tmp_path, name="out"):
    out = tmp_path / name
    code = main(args + ["--out", str(out)])
    return code, out


def load(out):
    return json.loads((out / "report.json").read_text())


def test_spectrum_icosphere(tmp_path):
    code, out = run(["spectrum", "--family", "icosphere:4", "--k", "9"], tmp_path)
    assert code == 0
    d = load(out)
    assert len(d["eigenvalues"]) == 9
    for v in d["eigenvalues"][1:4]:
        assert v == pytest.approx(2, rel=0.02)
    assert d["mass_scheme"] == "lumped"
    assert "generated_at" in d


def test_missing_file_exit2(tmp_path, capsys):
    code, _ = run(["spectrum", "--mesh", str(tmp_path / "nope.off"), "--k", "3"], tmp_path)
    assert code == 2
    assert "nope.off" in capsys.readouterr().err


def test_invalid_mesh_exit2(tmp_path, fixtures_dir):
    code, _ = run(["spectrum", "--mesh", str(fixtures_dir / "quad.off"), "--k", "3"], tmp_path)
    assert code == 2


@pytest.mark.parametrize("argv", [
    ["spectrum", "--family", "icosphere:2", "--k", "0"],
    ["spectrum", "--k", "3"],
    ["spectrum", "--family", "icosphere:2", "--mesh", "x.off", "--k", "3"],
    ["spectrum", "--family", "icosphere:2", "--mass", "diagonal"],
    ["frobnicate"],
    [],
])
def test_usage_exit64(tmp_path, argv):
    assert main(argv) == 64


def test_bad_family_exit2(tmp_path):
    code, _ = run(["spectrum", "--family", "icosphere:12", "--k", "3"], tmp_path)
    assert code == 2


def test_bounds_outputs(tmp_path):
    code, out = run(["bounds", "--family", "icosphere:3", "--k", "8", "--r0", "1", "--r0", "10"], tmp_path)
    assert code == 0
    d = load(out)
    assert d["schema"] == 1 and d["all_hold"]
    with open(out / "report.csv", newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 8
    assert rows[0]["mesh"] == "icosphere:3,1"
    svg = (out / "plot.svg").read_text()
    for series in ("achieved", "weyl", "reilly_chavel", "euclidean_bound", "general_bound",
                   "metric_bound_r0=1.0", "metric_bound_r0=10.0"):
        assert f'id="series-{series}"' in svg


def test_bounds_deterministic(tmp_path):
    args = ["bounds", "--family", "dumbbell:0.3,24", "--k", "6", "--seed", "7"]
    _, a = run(args, tmp_path, "a")
    _, b = run(args, tmp_path, "b")
    da, db = load(a), load(b)
    da.pop("generated_at"), db.pop("generated_at")
    assert json.dumps(da) == json.dumps(db)
    assert (a / "report.csv").read_bytes() == (b / "report.csv").read_bytes()
    assert (a / "plot.svg").read_bytes() == (b / "plot.svg").read_bytes()


def test_bounds_ricci(tmp_path):
    code, out = run(["bounds", "--family", "icosphere:2", "--k", "5", "--a", "1", "--r0", "0.1"], tmp_path)
    assert code == 0
    assert load(out)["all_hold"]


def test_bounds_ricci_r0_out_of_range(tmp_path):
    code, _ = run(["bounds", "--family", "icosphere:2", "--k", "5", "--a", "1", "--r0", "10"], tmp_path)
    assert code == 2


def test_decompose_auto(tmp_path):
    code, out = run(["decompose", "--family", "icosphere:3", "--K", "4"], tmp_path)
    assert code == 0
    d = load(out)
    assert len(d["sets"]) == 4
    assert all(v for k, v in d["audit"].items() if k != "min_separation")
    assert (out / "mesh.off").exists()


def test_decompose_k1(tmp_path):
    code, out = run(["decompose", "--family", "icosphere:2", "--K", "1"], tmp_path)
    assert code == 0
    assert len(load(out)["sets"]) == 1


def test_decompose_bad_r(tmp_path, capsys):
    code, _ = run(["decompose", "--family", "icosphere:3", "--K", "4", "--r", "0.5"], tmp_path)
    assert code == 2
    assert "exceeds" in capsys.readouterr().err


def test_certify(tmp_path):
    code, out = run(["certify", "--family", "icosphere:4", "--k", "3"], tmp_path)
    assert code == 0
    d = load(out)
    assert d["upper_bound"] >= d["fem_lambda_k"] - 1e-9
    assert d["k0"] == 1 and d["r_k"] > 0
    assert d["below_metric_bound"]
    assert d["branch"] in ("step3", "step4")
    with open(out / "report.csv", newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 2562 and set(rows[0]) == {"vertex", "f1", "f2", "f3"}


def test_certify_radius_too_large(tmp_path, capsys):
    code, _ = run(["certify", "--family", "icosphere:1", "--k", "6", "--r", "1.0"], tmp_path)
    assert code == 2
    assert "r_override" in capsys.readouterr().err


def test_counterexample(tmp_path):
    code, out = run(["counterexample", "--i-max", "20"], tmp_path)
    assert code == 0
    rows = load(out)["rows"]
    assert [r["normalized_lambda2"] for r in rows] == [8 * math.pi] * 20
    iso = [r["iso_ratio_i"] for r in rows]
    assert all(a > b for a, b in zip(iso, iso[1:]))
    assert (out / "plot.svg").exists()


def test_counterexample_single_row(tmp_path):
    code, out = run(["counterexample", "--i-max", "1"], tmp_path)
    assert code == 0
    assert len(load(out)["rows"]) == 1


def test_counterexample_too_large(tmp_path):
    code, _ = run(["counterexample", "--radius", "50", "--torus-volume", "10"], tmp_path)
    assert code == 2


def test_threads_env(tmp_path, monkeypatch):
    monkeypatch.setenv("SPECISO_THREADS", "1")
    code, _ = run(["spectrum", "--family", "icosphere:1", "--k", "3"], tmp_path)
    assert code == 0
    monkeypatch.setenv("SPECISO_THREADS", "zero")
    assert main(["spectrum", "--family", "icosphere:1", "--k", "3"]) == 64


def test_module_entry_point(tmp_path):
    res = subprocess.run([sys.executable, "-m", "speciso", "counterexample", "--i-max", "2", "--out", str(tmp_path)],
                         capture_output=True, text=True)
    assert res.returncode == 0
    assert len(res.stdout.strip().splitlines()) == 2


def test_log_axis_rule():
    from speciso.plotting import _wants_log

    assert _wants_log([1.0, 2e3])
    assert not _wants_log([1.0, 900.0])
    assert not _wants_log([0.0, None, 5.0])
