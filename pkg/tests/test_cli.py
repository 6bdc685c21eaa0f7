import csv
import json
import subprocess
import sys

import pytest

from corrdesign import cli, example


def run(*argv):
    return cli.main([str(a) for a in argv])


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def assert_newline_terminated(path):
    data = path.read_bytes()
    data.decode("utf-8")
    assert data.endswith(b"\n")


@pytest.fixture
def ex2_config(tmp_path):
    prob, _ = example("2")
    path = tmp_path / "ex2.json"
    path.write_text(json.dumps({"schema_version": 1, "problem": prob.to_spec(), "criterion": "D"}))
    return path


def test_solve_measure(tmp_path, ex2_config):
    out = tmp_path / "out"
    assert run("solve", "--config", ex2_config, "--method", "measure", "--out", out) == 0
    rows = read_csv(out / "measure.csv")
    assert rows[0] == ["x", "xi"] and len(rows) == 102
    assert abs(sum(float(r[1]) for r in rows[1:]) - 1) < 1e-10
    cert = json.loads((out / "certificate.json").read_text())
    assert cert["converged"] and cert["lp_gap"] <= 1e-4
    assert read_csv(out / "trace.csv")[0] == ["k", "t", "phi", "gap"]
    for name in ("measure.csv", "certificate.json", "trace.csv"):
        assert_newline_terminated(out / name)


def test_solve_with_method_and_roundtrip(tmp_path):
    out = tmp_path / "o"
    assert run("solve", "--example", "1", "--method", "Q-VN", "--out", out) == 0
    doc = json.loads((out / "designs.json").read_text())
    assert doc["schema_version"] == 1 and doc["results"][0]["method"] == "Q-VN"
    check = tmp_path / "check"
    assert run("certify", "--design", out / "designs.json", "--out", check) == 0
    res = json.loads((check / "certificate.json").read_text())
    assert res["all_match"] and all(d["relative_difference"] <= 1e-12 for d in res["designs"])


def test_certify_detects_tampering(tmp_path):
    out = tmp_path / "o"
    assert run("bksf", "--example", "2", "--no-bound", "--out", out) == 0
    path = out / "designs.json"
    doc = json.loads(path.read_text())
    doc["results"][0]["phi"] *= 1.001
    path.write_text(json.dumps(doc))
    assert run("certify", "--design", path, "--out", tmp_path / "c") == 3


def test_extract_from_measure_file(tmp_path):
    a = tmp_path / "a"
    assert run("solve", "--example", "4", "--out", a) == 0
    b = tmp_path / "b"
    assert run("extract", "--example", "4", "--measure", a / "measure.csv", "--mode", "with_endpoints",
               "--out", b) == 0
    res = json.loads((b / "designs.json").read_text())["results"][0]
    assert res["indices"][0] == 0 and res["indices"][-1] == 100
    assert res["efficiency"] is not None


def test_extract_random_and_certify_measure(tmp_path):
    a = tmp_path / "a"
    assert run("extract", "--example", "1", "--mode", "random", "--seed", "5", "--samples", "20", "--out", a) == 0
    res = json.loads((a / "designs.json").read_text())["results"][0]
    assert res["method"] == "R-VN" and res["seed"] == 5 and res["stats"]["samples"] == 20
    assert run("certify", "--example", "1", "--measure", a / "measure.csv", "--out", tmp_path / "c") == 0
    cert = json.loads((tmp_path / "c" / "certificate.json").read_text())
    assert len(cert["h_head"]) == 8


def test_exhaustive_cap(tmp_path):
    assert run("exhaustive", "--example", "2", "--out", tmp_path) == 2
    # C(101, 4) is about 4.1e6, over the default cap of 2e6
    assert run("exhaustive", "--example", "1", "--out", tmp_path) == 2
    assert run("exhaustive", "--example", "1", "--cap", "5000000", "--out", tmp_path) == 0
    res = json.loads((tmp_path / "designs.json").read_text())["results"][0]
    assert res["indices"] == [22, 66, 79, 100]


def test_sweep_curve(tmp_path):
    assert run("sweep", "--example", "1", "--n", "4..20", "--methods", "qvn,qvnep,bksf,runif",
               "--out", tmp_path) == 0
    rows = read_csv(tmp_path / "curve.csv")
    assert rows[0] == ["n", "method", "efficiency"]
    assert len(rows) - 1 == 17 * 4
    assert {r[1] for r in rows[1:]} == {"Q-VN", "Q-VN+EP", "BKSF", "R-UNIF"}
    assert_newline_terminated(tmp_path / "curve.csv")


def test_reproduce_example1(tmp_path, capsys):
    assert run("reproduce", "1", "--out", tmp_path) == 0
    text = capsys.readouterr().out
    assert "EXS" in text and "Q-VN+EP" in text
    summary = json.loads((tmp_path / "comparison.json").read_text())
    exs_row = next(r for r in summary["rows"] if r["method"] == "EXS")
    assert exs_row["status"] == "pass"
    assert (tmp_path / "measure.csv").exists() and (tmp_path / "designs.json").exists()


def test_reproduce_example5_shape(tmp_path):
    assert run("reproduce", "5", "--out", tmp_path) == 0
    rows = json.loads((tmp_path / "comparison.json").read_text())["rows"]
    shape = next(r for r in rows if r["method"].startswith("R-VN best >="))
    assert shape["status"] == "pass"
    header = read_csv(tmp_path / "measure.csv")[0]
    assert header == ["x1", "x2", "xi"]


@pytest.mark.parametrize(
    "argv",
    [
        ["solve", "--example", "7"],
        ["solve", "--example", "1", "--kappa", "1.0"],
        ["solve", "--example", "1", "--kappa", "abc"],
        ["solve", "--example", "1", "--epsilon", "0.5"],
        ["sweep", "--example", "1"],
        ["reproduce", "9"],
    ],
)
def test_config_errors_exit_2(tmp_path, argv):
    assert run(*argv, "--out", tmp_path) == 2


def test_bad_config_file(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert run("solve", "--config", bad, "--out", tmp_path) == 2
    bad.write_text(json.dumps({"problem": {"grid": {"type": "linspace", "lo": 1, "hi": 2, "num": 11}}}))
    assert run("solve", "--config", bad, "--out", tmp_path) == 2


def test_numerical_failure_exit_3(tmp_path):
    # a reduced design with fewer points than parameters is singular inside the exchange
    assert run("bksf", "--example", "2", "--n", "4", "--no-bound", "--out", tmp_path) == 3


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "corrdesign", "solve", "--example", "1", "--out", str(tmp_path)],
                          capture_output=True, text=True, env={"CORRDESIGN_THREADS": "1", "PATH": ""})
    assert proc.returncode == 0, proc.stderr
    assert "converged=True" in proc.stdout
