from __future__ import annotations

import csv
import json
import math

import jsonschema
import pytest

from todabif.cli import ENV_OUTPUT_DIR, fmt, load_schema, main, resolve_config


def _rows(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def test_spectrum_csv(tmp_path):
    assert main(["spectrum", "--max-n", "5", "--output-dir", str(tmp_path)]) == 0
    rows = _rows(tmp_path / "spectrum.csv")
    assert rows[0] == ["n", "mu_n", "multiplicity"]
    assert rows[1] == ["1", "0.0", "3"] and rows[2] == ["2", "-1.0", "5"]
    assert rows[3][0] == "3" and float(rows[3][1]) == -10 / 7 and rows[3][2] == "7"
    assert rows[3][1].startswith("-1.428571")
    assert len(rows) == 6


def test_kernel_csv(tmp_path):
    assert main(["kernel", "--n", "2", "--grid-size", "64", "--output-dir", str(tmp_path)]) == 0
    rows = _rows(tmp_path / "kernel_2.csv")
    assert rows[0] == ["t", "r", "P_n"] and len(rows) == 65
    t, r, p = map(float, rows[1])
    assert (t, r, p) == (1.0, 0.0, 1.0)


def test_detect_csv(tmp_path):
    assert main(["detect", "--mu-range", "-1.6", "0.5", "--output-dir", str(tmp_path)]) == 0
    rows = _rows(tmp_path / "detect.csv")
    assert [r[1] for r in rows[1:]] == ["3", "2", "1"]
    for r in rows[1:]:
        assert float(r[2]) <= 1e-3


def test_continue_branch(tmp_path):
    code = main(["continue", "--n", "2", "--eps-max", "1e-3", "--steps", "4", "--output-dir", str(tmp_path), "--dump-fields"])
    assert code == 0
    rows = _rows(tmp_path / "branch_2.csv")
    header = rows[0]
    assert header[:4] == ["arclength", "mu", "epsilon", "L"]
    iL = header.index("L")
    assert all(abs(float(r[iL])) <= 1e-9 for r in rows[1:])
    assert all(r[header.index("passed")] == "true" for r in rows[1:])
    dump = json.loads((tmp_path / "fields_2.json").read_text())
    jsonschema.validate(dump, load_schema("fields"))


def test_continue_idempotent(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for d in (a, b):
        assert main(["continue", "--n", "2", "--steps", "3", "--grid-size", "200", "--output-dir", str(d), "--dump-fields"]) == 0
    assert (a / "branch_2.csv").read_bytes() == (b / "branch_2.csv").read_bytes()
    assert (a / "fields_2.json").read_bytes() == (b / "fields_2.json").read_bytes()


def test_verify_jostwang(tmp_path):
    assert main(["verify-closed-form", "--family", "jostwang", "--a1", "1", "--a2", "1", "--output-dir", str(tmp_path)]) == 0
    rep = json.loads((tmp_path / "report_jostwang.json").read_text())
    jsonschema.validate(rep, load_schema("report"))
    assert rep["mass_u"] == pytest.approx(8 * math.pi, rel=1e-6)
    assert rep["mass_v"] == pytest.approx(8 * math.pi, rel=1e-6)
    assert rep["passed"] is True


def test_verify_liouville(tmp_path):
    assert main(["verify-closed-form", "--family", "liouville", "--mu", "0", "--output-dir", str(tmp_path), "--id", "L0"]) == 0
    rep = json.loads((tmp_path / "report_L0.json").read_text())
    assert rep["mass_u"] == pytest.approx(4 * math.pi, rel=1e-10)


def test_diagnose_and_negative_control(tmp_path):
    assert main(["continue", "--n", "2", "--steps", "2", "--grid-size", "200", "--output-dir", str(tmp_path), "--dump-fields"]) == 0
    src = str(tmp_path / "fields_2.json")
    good = tmp_path / "good"
    assert main(["diagnose", "--fields", src, "--output-dir", str(good)]) == 0
    reps = sorted(good.glob("report_*.json"))
    assert len(reps) == 5
    for p in reps:
        jsonschema.validate(json.loads(p.read_text()), load_schema("report"))
    bad = tmp_path / "bad"
    assert main(["diagnose", "--fields", src, "--noise", "0.05", "--seed", "3", "--output-dir", str(bad)]) == 3


def test_config_errors(tmp_path):
    assert main(["kernel", "--grid-size", "8", "--output-dir", str(tmp_path)]) == 1
    assert main(["continue", "--tol", "-1", "--output-dir", str(tmp_path)]) == 1
    assert main(["--output-dir", str(tmp_path)]) == 1
    assert main(["detect", "--mu-range", "0.5", "-0.5", "--output-dir", str(tmp_path)]) == 1
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"command": "diagnose", "alpha": 1.5}))
    assert main(["--config", str(cfg)]) == 1
    assert main(["bogus"]) == 1


def test_solver_failure_exit_code(tmp_path):
    assert main(["perturb-cartan", "--mu-target", "1.9", "--steps", "1", "--grid-size", "100",
                 "--output-dir", str(tmp_path)]) == 2


def test_precedence(tmp_path, monkeypatch):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"command": "spectrum", "max_n": 3, "output_dir": str(tmp_path / "from_config")}))
    rc = resolve_config({"config": str(cfg)}, env={})
    assert rc.output_dir.endswith("from_config") and rc.max_n == 3
    rc = resolve_config({"config": str(cfg)}, env={ENV_OUTPUT_DIR: str(tmp_path / "from_env")})
    assert rc.output_dir.endswith("from_env")
    rc = resolve_config({"config": str(cfg), "output_dir": str(tmp_path / "flag"), "max_n": 4},
                        env={ENV_OUTPUT_DIR: str(tmp_path / "from_env")})
    assert rc.output_dir.endswith("flag") and rc.max_n == 4
    monkeypatch.setenv(ENV_OUTPUT_DIR, str(tmp_path / "envrun"))
    assert main(["--config", str(cfg)]) == 0
    assert (tmp_path / "envrun" / "spectrum.csv").exists()


def test_config_file_schema_roundtrip(tmp_path):
    cfg = {"command": "continue", "grid_size": 200, "alpha": 0.5, "mode_n": 2, "eps_max": 1e-3,
           "mu_range": [-1.6, 0.5], "tol": 1e-10, "seed": 1, "output_dir": str(tmp_path)}
    jsonschema.validate(cfg, load_schema("run_config"))
    rc = resolve_config({"config": _write(tmp_path, cfg)}, env={})
    assert rc.grid().size == 200 and rc.mu_range == (-1.6, 0.5)


def _write(tmp_path, obj):
    p = tmp_path / "cfg.json"
    p.write_text(json.dumps(obj))
    return str(p)


def test_float_format_round_trip():
    for x in (0.1, -10 / 7, 1e-17, 123456789.123, -0.0):
        assert float(fmt(x)) == x
    assert fmt(-1.0) == "-1.0" and fmt(3) == "3" and fmt(True) == "true"


def test_module_entry(tmp_path):
    import subprocess
    import sys

    out = subprocess.run([sys.executable, "-m", "todabif", "spectrum", "--max-n", "2", "--output-dir", str(tmp_path)])
    assert out.returncode == 0 and (tmp_path / "spectrum.csv").exists()
