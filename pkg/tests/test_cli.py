import csv
import json
import subprocess
import sys

import pytest
from hypothesis import given
from hypothesis import strategies as st

from singular_mlap.cli import dumps_report, main
from singular_mlap.mesh import build_graded_mesh, write_csv


def _classify(capsys, *vals):
    args = ["classify"]
    for k, v in zip("mpqrs", vals):
        args += [f"--{k}", str(v)]
    code = main(args)
    return code, capsys.readouterr().out


def test_classify_case_one(capsys):
    code, out = _classify(capsys, 2, 0.2, 0.3, 1, 3)
    data = json.loads(out)
    assert code == 0
    assert data["case"] == "I" and data["uniqueness"] is True
    assert data["v_law"]["power"] == pytest.approx(0.75)
    assert data["v_tau"] == {"lower": 2.0, "upper": 4.0, "upper_inclusive": True}
    assert data["violations"] == []


def test_classify_not_covered(capsys):
    code, out = _classify(capsys, 2, 1, 0.4, 0.1, 2.5)
    assert code == 2 and json.loads(out)["case"] == "NotCovered"


def test_classify_violation(capsys):
    code, out = _classify(capsys, 2, 2, 1, 0.1, 3)
    assert code == 3 and json.loads(out)["violations"] == ["first structural"]


@pytest.mark.parametrize("argv", [
    ["classify", "--m", "0.5", "--p", "0.2", "--q", "0.3", "--r", "1", "--s", "3"],
    ["classify", "--m", "2", "--p", "0.2"],
    ["classify", "--m", "two", "--p", "0.2", "--q", "0.3", "--r", "1", "--s", "3"],
    ["bogus"],
    [],
])
def test_malformed_flags(argv, capsys):
    assert main(argv) == 64


def test_console_script_exit_code():
    proc = subprocess.run([sys.executable, "-m", "singular_mlap.cli", "classify", "--m", "2",
                           "--p", "1", "--q", "0.4", "--r", "0.1", "--s", "2.5"],
                          capture_output=True, text=True)
    assert proc.returncode == 2
    proc = subprocess.run([sys.executable, "-m", "singular_mlap.cli", "classify", "--m", "2"],
                          capture_output=True, text=True)
    assert proc.returncode == 64


@given(st.floats(-1, 5), st.floats(-1, 3), st.floats(-1, 3), st.floats(-1, 3), st.floats(-1, 3))
def test_classify_exit_codes_total(m, p, q, r, s):
    args = ["classify"]
    for k, v in zip("mpqrs", (m, p, q, r, s)):
        args += [f"--{k}={v!r}"]
    assert main(args) in {0, 2, 3, 64}


def _write(tmp_path, name, data):
    path = tmp_path / name
    path.write_text(json.dumps(data))
    return str(path)


def test_solve_scalar_torsion(tmp_path):
    cfg = _write(tmp_path, "c.json", {"m": 2, "p": 0, "weight": {}, "base_n": 512, "levels": 1,
                                      "output_dir": str(tmp_path / "out")})
    assert main(["solve-scalar", "--config", cfg]) == 0
    rep = json.loads((tmp_path / "out" / "report.json").read_text())
    assert rep["residual"] <= 1e-9 and rep["sandwich_ok"] is True
    assert rep["center_value"] == pytest.approx(0.125, abs=1e-8)
    assert (tmp_path / "out" / "solution.csv").read_text().startswith("coordinate,u")


def test_solve_scalar_manufactured(tmp_path):
    cfg = _write(tmp_path, "c.json", {"m": 2, "p": 0, "weight": {"manufactured_a": 0.5},
                                      "base_n": 256, "levels": 4, "grading": 2.0,
                                      "output_dir": str(tmp_path / "out")})
    assert main(["solve-scalar", "--config", cfg]) == 0
    rep = json.loads((tmp_path / "out" / "report.json").read_text())
    assert rep["sup_error"] <= 1e-4 and rep["n"] == 2048


def test_solve_scalar_tabulated_csv(tmp_path):
    mesh = build_graded_mesh("interval", 256)
    write_csv(tmp_path / "k.csv", mesh, [1.0] * 257, ("coordinate", "value"))
    cfg = _write(tmp_path, "c.json", {"m": 2, "p": 0, "weight": {"tabulated_csv": "k.csv"},
                                      "base_n": 256, "levels": 1, "output_dir": str(tmp_path / "o")})
    assert main(["solve-scalar", "--config", cfg]) == 0
    assert json.loads((tmp_path / "o" / "report.json").read_text())["center_value"] == pytest.approx(0.125)


def test_solve_scalar_violation(tmp_path):
    cfg = _write(tmp_path, "c.json", {"m": 2, "p": 0.5, "weight": {"q_exp": 1.4},
                                      "output_dir": str(tmp_path / "out")})
    assert main(["solve-scalar", "--config", cfg]) == 3
    rep = json.loads((tmp_path / "out" / "report.json").read_text())
    assert rep["violations"] == ["scalar structural"]


def test_solve_scalar_nonconvergence(tmp_path):
    cfg = _write(tmp_path, "c.json", {
        "m": 3, "p": 1.5, "weight": {"q_exp": 0.25}, "base_n": 128, "levels": 1, "grading": 2.6,
        "settings": {"max_iter": 1, "max_fallback_iter": 1, "sigma_schedule": [0.0]},
        "output_dir": str(tmp_path / "out")})
    assert main(["solve-scalar", "--config", cfg]) == 1


@pytest.mark.parametrize("data", [
    "not json",
    {"m": 2, "p": 0},
    {"m": 2, "p": 0, "weight": {}, "base_n": 32},
    {"m": 2, "p": 0, "weight": {}, "levels": 7},
    {"m": 2, "p": 0, "weight": {"colour": 1}},
    {"m": 2, "p": 0, "weight": {}, "frobnicate": True},
    {"m": 2, "p": 0, "weight": {}, "settings": {"max_iter": 0}},
])
def test_solve_scalar_bad_config(tmp_path, data):
    path = tmp_path / "c.json"
    path.write_text(data if isinstance(data, str) else json.dumps(data))
    assert main(["solve-scalar", "--config", str(path), "--output-dir", str(tmp_path / "o")]) == 64


def test_missing_config_file(tmp_path):
    assert main(["solve-system", "--config", str(tmp_path / "none.json")]) == 64


SYSTEM_CFG = {"exponents": {"m": 2, "p": 0.3, "q": 0.2, "r": 0.2, "s": 0.3},
              "base_n": 128, "levels": 1}


def test_solve_system_outputs(tmp_path):
    cfg = _write(tmp_path, "c.json", dict(SYSTEM_CFG, output_dir=str(tmp_path / "out")))
    assert main(["solve-system", "--config", cfg]) == 0
    out = tmp_path / "out"
    for name in ("u.csv", "v.csv", "history.csv", "report.json"):
        assert (out / name).exists()
    rep = json.loads((out / "report.json").read_text())
    assert rep["case"] == "III" and rep["converged"] and rep["in_band"]
    with (out / "history.csv").open() as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == rep["iterations"]


def test_solve_system_not_covered(tmp_path):
    cfg = _write(tmp_path, "c.json", {"exponents": {"m": 2, "p": 1, "q": 0.4, "r": 0.1, "s": 2.5}})
    assert main(["solve-system", "--config", cfg]) == 2


def test_report_round_trip(tmp_path):
    cfg = _write(tmp_path, "c.json", dict(SYSTEM_CFG, output_dir=str(tmp_path / "out")))
    main(["solve-system", "--config", cfg])
    text = (tmp_path / "out" / "report.json").read_text()
    assert dumps_report(json.loads(text)) == text


def test_report_encodes_infinity_as_null():
    assert json.loads(dumps_report({"x": float("inf"), "y": [1.0, float("nan")]})) == {"x": None, "y": [1.0, None]}


def test_verify_small(tmp_path, capsys):
    cfg = _write(tmp_path, "c.json", dict(SYSTEM_CFG, levels=3, output_dir=str(tmp_path / "out")))
    code = main(["verify", "--config", cfg])
    out = capsys.readouterr().out.splitlines()
    rep = json.loads((tmp_path / "out" / "report.json").read_text())
    assert code == (0 if rep["pass"] else 1)
    assert len(out) == len(rep["checks"])
    assert all(line.split()[0] in ("PASS", "FAIL") for line in out)
    assert {"rate_u", "rate_v", "band", "uniqueness", "tau_u"} <= set(rep["checks"])
    assert dumps_report(rep) == (tmp_path / "out" / "report.json").read_text()


def test_verify_parallel_matches_serial(tmp_path, capsys):
    serial = _write(tmp_path, "s.json", dict(SYSTEM_CFG, levels=3, output_dir=str(tmp_path / "s")))
    par = _write(tmp_path, "p.json", dict(SYSTEM_CFG, levels=3, output_dir=str(tmp_path / "p")))
    main(["verify", "--config", serial])
    main(["verify", "--config", par, "--workers", "2"])
    a = json.loads((tmp_path / "s" / "report.json").read_text())
    b = json.loads((tmp_path / "p" / "report.json").read_text())
    assert a["fits"] == b["fits"] and a["checks"] == b["checks"]


def test_verify_not_covered(tmp_path):
    cfg = _write(tmp_path, "c.json", {"exponents": {"m": 2, "p": 1, "q": 0.4, "r": 0.1, "s": 2.5}})
    assert main(["verify", "--config", cfg]) == 2


def test_sweep_grid(tmp_path):
    grid = _write(tmp_path, "g.json", {"m": [2], "p": [0.2, 3.0], "q": [0.3], "r": [1], "s": [3]})
    out = tmp_path / "sweep.csv"
    assert main(["sweep", "--grid", grid, "--out", str(out)]) == 0
    rows = list(csv.DictReader(out.open()))
    assert [r["case"] for r in rows] == ["I", ""]
    assert rows[1]["violations"] == "first structural"


def test_sweep_solve(tmp_path):
    grid = _write(tmp_path, "g.json", {"tuples": [[2, 0.3, 0.2, 0.2, 0.3]]})
    out = tmp_path / "sweep.csv"
    assert main(["sweep", "--grid", grid, "--out", str(out), "--solve", "--n", "256"]) == 0
    row = next(csv.DictReader(out.open()))
    assert row["converged"] == "True" and abs(float(row["fitted_v"]) - 1) < 0.05


def test_sweep_random_seeded(tmp_path):
    paths = []
    for seed, name in ((7, "a"), (7, "b"), (8, "c")):
        path = tmp_path / f"{name}.csv"
        assert main(["--seed", str(seed), "sweep", "--random", "20", "--out", str(path)]) == 0
        paths.append(path.read_text())
    assert paths[0] == paths[1] != paths[2]
