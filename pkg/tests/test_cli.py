import json
import subprocess
import sys

import pytest

from measure_morph.cli import run_command


def _json(capsys, argv):
    code = run_command(argv)
    return code, json.loads(capsys.readouterr().out)


def test_feynman_kac_massless(capsys):
    code, out = _json(capsys, ["feynman-kac", "--m", "0", "--paths", "10", "--steps", "8", "--seed", "1"])
    assert code == 0
    assert out["lhs"]["mean"] == out["rhs"]["mean"] == 1.0
    assert out["config"]["seed"] == 1


def test_verify_writes_file(tmp_path, capsys):
    path = tmp_path / "r.json"
    argv = ["verify", "--family", "g0", "--m", "1", "--functional", "point-square", "--t0", "0.5",
            "--paths", "4096", "--steps", "64", "--seed", "42", "--out", str(path)]
    assert run_command(argv) == 0
    out = json.loads(path.read_text())
    assert out["z_score"] < 4
    assert out["config"]["diffeo"]["family"] == "g0"


def test_fixed_ends_coefficient_fails_verify(capsys):
    code, out = _json(capsys, ["verify", "--m", "1", "--paths", "20000", "--steps", "128",
                               "--seed", "3", "--coefficient", "fixed-ends"])
    assert code == 2 and out["z_score"] >= 4


def test_seed_from_environment(monkeypatch, capsys):
    monkeypatch.setenv("MEASURE_MORPH_SEED", "17")
    _, out = _json(capsys, ["oracle", "--m", "1", "--steps", "16"])
    assert out["oracle_lhs"] == pytest.approx(0.25)
    _, out = _json(capsys, ["substitute", "--paths", "100", "--steps", "8"])
    assert out["config"]["seed"] == 17


def test_modes_csv(capsys):
    assert run_command(["modes", "--m", "1", "--k", "0.5,1,2,4"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert len(lines) == 5 and lines[0].startswith("k,omega0,omega_m,sigma")


def test_modes_zero_k(capsys):
    assert run_command(["modes", "--k", "0,1"]) == 1
    err = json.loads(capsys.readouterr().err.splitlines()[-1])
    assert err["error"] == "ZeroWaveNumber"


def test_bad_mobius_and_usage(capsys):
    assert run_command(["verify", "--family", "mobius", "--delta", "-2"]) == 1
    assert json.loads(capsys.readouterr().err)["error"] == "InvalidParameter"
    assert run_command(["verify", "--steps", "1"]) == 1
    assert run_command(["nonsense"]) == 1


def test_sample_and_schwarzian(capsys):
    assert run_command(["sample", "--paths", "2", "--steps", "4", "--seed", "5"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == "path_id,t,x" and len(lines) == 11
    assert run_command(["schwarzian", "--family", "mobius-g0", "--m", "1", "--delta", "0.5", "--probes", "3"]) == 0
    rows = capsys.readouterr().out.splitlines()[1:]
    assert all(abs(float(r.split(",")[-1]) + 2) < 1e-12 for r in rows)


def test_diffeo_json_option(capsys):
    spec = json.dumps({"family": "mobius-g0", "m": 0.5, "delta": 3.0})
    code, out = _json(capsys, ["oracle", "--diffeo", spec, "--steps", "32", "--functional", "integrated-square"])
    assert code == 0
    assert out["oracle_rhs"] == pytest.approx(out["oracle_lhs"], rel=1e-3)


def test_console_entry_point(tmp_path):
    a = tmp_path / "a.json"
    b = tmp_path / "b.json"
    base = [sys.executable, "-m", "measure_morph", "verify", "--paths", "3000", "--steps", "32", "--seed", "9"]
    subprocess.run(base + ["--threads", "1", "--out", str(a)], check=True)
    subprocess.run(base + ["--threads", "4", "--out", str(b)], check=True)
    assert a.read_bytes() == b.read_bytes()
