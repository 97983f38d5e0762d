from pathlib import Path

import numpy as np
import pytest

from charwave.cli import EXIT_CONFIG, EXIT_OK, EXIT_PARTIAL, load_config, main
from charwave.goursat import GridField

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def _write(tmp_path, text, name="run.ini"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


ZERO = """
[problem]
phi = 0
psi = 0
curve = x^3 + eps*x
[frame]
nx = 17
ny = 17
[observables]
P0 = seminorm u 0 -1 1 -1 1
"""


def test_solve_example1(tmp_path, capsys):
    rc = main(["solve", str(CONFIGS / "example1.ini"), "--out", str(tmp_path)])
    assert rc == EXIT_OK
    u = GridField.from_csv(tmp_path / "field.csv")
    assert u.eps == 0.1
    assert u.at(1.0, 2.0) == pytest.approx(1.9, abs=1e-6)
    text = (tmp_path / "solve_report.txt").read_text()
    assert "status = ok" in text and "iterations = 1" in text


def test_solve_zero_data_gives_zero_field(tmp_path):
    rc = main(["solve", _write(tmp_path, ZERO), "--out", str(tmp_path / "o")])
    assert rc == EXIT_OK
    assert np.all(GridField.from_csv(tmp_path / "o" / "field.csv").values == 0)


def test_malformed_expression(tmp_path, capsys):
    rc = main(["solve", _write(tmp_path, ZERO.replace("phi = 0", "phi = x^2 +* 1"))])
    assert rc == EXIT_CONFIG
    assert "offset 5" in capsys.readouterr().err


@pytest.mark.parametrize("bad", [
    ZERO.replace("nx = 17", "nx = -3"),
    ZERO.replace("nx = 17", "nx = many"),
    ZERO.replace("curve = x^3 + eps*x", ""),
    ZERO + "\n[targets]\nnope = bounded\n",
    ZERO + "\n[targets]\nP0 = huge\n",
    ZERO.replace("seminorm u 0", "seminorm w 0"),
    ZERO + "Q = pair u 1 0 missing\n",
    "not an ini file",
])
def test_config_errors(tmp_path, bad):
    assert main(["solve", _write(tmp_path, bad)]) == EXIT_CONFIG


def test_missing_config_file(tmp_path):
    assert main(["solve", str(tmp_path / "absent.ini")]) == EXIT_CONFIG


def test_empty_observables(tmp_path, capsys):
    text = ZERO.replace("P0 = seminorm u 0 -1 1 -1 1", "")
    assert main(["sweep", _write(tmp_path, text), "--out", str(tmp_path / "o")]) == EXIT_CONFIG
    assert "observables" in capsys.readouterr().err


def test_output_dir_precedence(tmp_path, monkeypatch):
    cfg = _write(tmp_path, ZERO + "\n[output]\ndir = from-config\n")
    assert load_config(cfg).out == "from-config"
    monkeypatch.setenv("CHARWAVE_OUT", "from-env")
    assert load_config(cfg).out == "from-env"
    assert load_config(cfg, out="from-flag").out == "from-flag"


def test_flag_overrides(tmp_path):
    cfg = load_config(_write(tmp_path, ZERO + "\n[sweep]\neps = 0.3\n"), eps=0.05, tol=1e-8)
    assert cfg.eps == 0.05 and cfg.tol == 1e-8


def test_env_output_dir_used_by_solve(tmp_path, monkeypatch):
    monkeypatch.setenv("CHARWAVE_OUT", str(tmp_path / "env"))
    assert main(["solve", _write(tmp_path, ZERO)]) == EXIT_OK
    assert (tmp_path / "env" / "field.csv").exists()


def test_sweep_example2(tmp_path, capsys):
    rc = main(["sweep", str(CONFIGS / "example2-tanh.ini"), "--out", str(tmp_path), "--jobs", "1"])
    assert rc == EXIT_OK
    report = (tmp_path / "report.md").read_text()
    assert "associated: -2psi(0)delta+phi': PASS" in report
    assert "associated: psi(0): PASS" in report
    assert "associated: -2psi(0)Y_x+phi+psi(0)y+psi(0): PASS" in report
    assert "moderate(1): PASS (moderate(1))" in report
    header = (tmp_path / "sweep.csv").read_text().splitlines()[0]
    assert header == "eps,observable,K,l,value"
    for p in tmp_path.glob("*.dat"):
        lines = p.read_text().splitlines()
        assert lines[0].startswith("# ")
        assert all(len(line.split()) == 2 for line in lines[1:])


def test_sweep_counterexample(tmp_path):
    rc = main(["sweep", str(CONFIGS / "counterexample.ini"), "--out", str(tmp_path), "--jobs", "1"])
    assert rc == EXIT_OK
    assert "negligible: FAIL (moderate(1))" in (tmp_path / "report.md").read_text()


def test_partial_sweep_exit_code(tmp_path):
    text = """
[problem]
phi = 0
psi = 1
curve = tanh(x/eps)
[frame]
b = 0.5
nx = 65
ny = 65
[sweep]
count = 6
[observables]
P0 = seminorm u 0 -0.5 0.5 -0.5 0.5
"""
    rc = main(["sweep", _write(tmp_path, text), "--out", str(tmp_path / "o"), "--jobs", "1"])
    assert rc == EXIT_PARTIAL
    assert "partial sweep" in (tmp_path / "o" / "report.md").read_text()


def test_sweep_is_idempotent(tmp_path):
    cfg = _write(tmp_path, ZERO + "\n[sweep]\ncount = 4\n")
    out = tmp_path / "o"
    main(["sweep", cfg, "--out", str(out), "--jobs", "1"])
    first = {p.name: p.read_bytes() for p in out.iterdir()}
    main(["sweep", cfg, "--out", str(out), "--jobs", "1"])
    assert {p.name: p.read_bytes() for p in out.iterdir()} == first


def test_scenario_commands(tmp_path, capsys):
    assert main(["scenario", "bogus"]) == EXIT_CONFIG
    assert main(["scenario", "example1", "--out", str(tmp_path / "e1"), "--jobs", "1"]) == EXIT_OK
    assert "overall: **PASS**" in (tmp_path / "e1" / "report.md").read_text()
    assert main(["scenario", "uniqueness", "--out", str(tmp_path / "u"), "--jobs", "1"]) == EXIT_OK
    out = capsys.readouterr().out
    assert "PASS w = u - v is negligible at l = 0" in out


def test_verify_command(capsys):
    assert main(["verify", str(CONFIGS / "example1.ini"), "--cases", "20"]) == EXIT_OK
    out = capsys.readouterr().out
    assert "FAIL" not in out and out.count("PASS") >= 7


def test_module_entry_point():
    import subprocess
    import sys

    r = subprocess.run([sys.executable, "-m", "charwave", "scenario", "bogus"], capture_output=True, text=True)
    assert r.returncode == EXIT_CONFIG
