import csv
import json
import os
import subprocess
import sys

import pytest

from cedensity.cli import run

pytestmark = pytest.mark.filterwarnings("ignore::cedensity.errors.DepthInfiniteWarning")


def read_csv(path):
    with open(path) as fh:
        return list(csv.reader(fh))


def test_unknown_subcommand():
    assert run(["bogus"]) == 1


def test_bad_flag_value():
    assert run(["sweep", "--eps", "-1", "--out", "x.csv"]) == 1
    assert run(["balls", "verify", "--in", "f.json", "--N", "3", "--kappa", "1.5"]) == 1


def test_runtime_error_exit_code(tmp_path):
    assert run(["balls", "verify", "--in", str(tmp_path / "missing.json"), "--N", "3"]) == 2
    assert run(["sweep", "--center", "5", "--eps", "0.1", "--grid", "2",
                "--out", str(tmp_path / "r.csv")]) == 2


def test_orbit_csv(tmp_path):
    out = tmp_path / "orbit.csv"
    assert run(["orbit", "--family", "logistic", "--t", "4", "--n", "30", "--out", str(out)]) == 0
    rows = read_csv(out)
    assert rows[0] == ["n", "x", "sign_D", "log_D", "crit_dist", "partial_W", "M_n"]
    assert len(rows) == 32
    assert float(rows[-1][5]) == pytest.approx(4 / 3, abs=1e-10)
    assert float(rows[-1][6]) == 0.25


def test_returns_csv(tmp_path):
    out = tmp_path / "ret.csv"
    assert run(["returns", "--t", "3.95", "--eps", "1e-2", "--count", "8", "--out", str(out)]) == 0
    rows = read_csv(out)
    assert rows[0] == ["j", "S_j", "nearest", "d_j", "log_P_j", "p_j", "p_tilde_j",
                       "essential", "free"]
    assert len(rows) == 9 and rows[1][8] == "1"


def test_classify_json(tmp_path):
    out = tmp_path / "c.json"
    assert run(["classify", "--t", "4", "--n-max", "500", "--diagnostic", "--out", str(out)]) == 0
    data = json.loads(out.read_text())
    assert data["row"]["ce_verdict"] is True
    assert data["totaldepth"]["error"] == "NotInBoundaryClass"


def test_sweep_two_csvs(tmp_path):
    r, s = tmp_path / "r.csv", tmp_path / "s.csv"
    args = ["sweep", "--family", "logistic", "--center", "4", "--eps", "1e-2,1e-3", "--grid", "20",
            "--C", "20", "--tau", "2", "--seed", "7", "--n-max", "2000",
            "--out", str(r), "--summary", str(s)]
    assert run(args) == 0
    rows = read_csv(r)
    assert rows[0] == ["t", "x_pass_n", "y_pass_m", "ce_rate", "ce_verdict", "pr_best_C",
                       "nv_nonzero", "undetermined_flag"]
    assert len(rows) == 41
    summary = read_csv(s)
    assert summary[0][:6] == ["eps", "lo", "hi", "one_sided", "fraction_pass",
                              "fraction_undetermined"]
    assert len(summary) == 3
    # 17 significant digits
    assert rows[1][0] == "%.17g" % float(rows[1][0])


def test_balls_commands(tmp_path):
    fam = tmp_path / "fam.json"
    assert run(["balls", "random", "--seed", "4", "--count", "12", "--out", str(fam)]) == 0
    assert len(json.loads(fam.read_text())) == 12
    res = tmp_path / "v.json"
    assert run(["balls", "verify", "--in", str(fam), "--N", "10", "--kappa", "0.5",
                "--out", str(res)]) == 0
    v = json.loads(res.read_text())
    assert set(v) >= {"measure", "bound", "pass"} and v["pass"] is True
    iv = tmp_path / "iv.csv"
    assert run(["balls", "deepset", "--in", str(fam), "--N", "3", "--out", str(iv)]) == 0
    assert read_csv(iv)[0] == ["left", "right"]


def test_boxes_find(tmp_path):
    out = tmp_path / "boxes.json"
    assert run(["boxes", "find", "--family", "logistic", "--range", "3:4", "--m-max", "1",
                "--eps", "1e-2", "--lambda", "2", "--theta", "0.01", "--out", str(out)]) == 0
    boxes = json.loads(out.read_text())
    assert len(boxes) == 1
    assert set(boxes[0]) >= {"center", "radius", "order", "crit", "verified"}


def test_constants(tmp_path):
    out = tmp_path / "k.json"
    assert run(["constants", "--eps", "1e-3", "--samples", "4", "--seed", "1",
                "--out", str(out)]) == 0
    assert "Lambda_hat" in json.loads(out.read_text())


def test_no_temp_files_left(tmp_path):
    out = tmp_path / "o.csv"
    run(["orbit", "--n", "5", "--out", str(out)])
    assert os.listdir(tmp_path) == ["o.csv"]


def test_family_file(tmp_path):
    spec = tmp_path / "fam.json"
    spec.write_text(json.dumps({"kind": "poly", "coeffs": [4, -9], "direction": [1, 0],
                                "base": 0.0}))
    out = tmp_path / "o.csv"
    assert run(["orbit", "--family", str(spec), "--crit", "1", "--n", "10", "--out", str(out)]) == 0
    assert len(read_csv(out)) == 12


@pytest.mark.parametrize("argv", [
    ["orbit", "--t", "3.91", "--n", "200"],
    ["returns", "--t", "3.97", "--eps", "1e-3", "--count", "15"],
    ["classify", "--t", "3.99", "--n-max", "3000"],
    ["balls", "random", "--seed", "9", "--count", "15"],
    ["boxes", "find", "--range", "3.5:4", "--m-max", "3"],
    ["constants", "--eps", "1e-3", "--samples", "6", "--seed", "2"],
])
def test_byte_determinism(tmp_path, argv):
    a, b = tmp_path / "a", tmp_path / "b"
    assert run(argv + ["--out", str(a)]) == 0
    assert run(argv + ["--out", str(b), "--threads", "2"]) == 0
    assert a.read_bytes() == b.read_bytes()


def test_module_entry_point(tmp_path):
    out = tmp_path / "o.csv"
    proc = subprocess.run([sys.executable, "-m", "cedensity", "orbit", "--n", "3", "--out", str(out)],
                          capture_output=True, text=True)
    assert proc.returncode == 0 and out.exists()
    proc = subprocess.run([sys.executable, "-m", "cedensity", "nope"], capture_output=True, text=True)
    assert proc.returncode == 1 and "nope" in proc.stderr
