from __future__ import annotations

import json
import subprocess
import sys

import pytest

from vmcoal import cli


@pytest.fixture
def configs(tmp_path):
    bip = tmp_path / "bipartite.json"
    bip.write_text(json.dumps({"V": [[0, 1], [1, 0]], "alpha": [1, 1]}))
    scalar = tmp_path / "scalar2.json"
    scalar.write_text(json.dumps({"V": [[1]], "z": [2]}))
    return bip, scalar


def test_gelation_example(configs, capsys):
    assert cli.run(["gelation", "--config", str(configs[0])]) == 0
    assert "T_gel = 1.0" in capsys.readouterr().out


def test_invert_example(configs, capsys):
    assert cli.run(["invert", "--config", str(configs[1])]) == 0
    out = capsys.readouterr().out
    assert "region=Exterior" in out
    assert "0.406375739" in out


def test_trees_example(capsys):
    assert cli.run(["trees", "--x", "2:2", "--V", "0,1;1,0"]) == 0
    out = capsys.readouterr().out
    assert "T_2:2 = 4" in out
    for method in ("Cofactor", "RankOne", "ClosedForm", "BruteForce"):
        assert method in out


def test_inline_flags_override_config(configs, capsys):
    assert cli.run(["gelation", "--config", str(configs[0]), "--alpha", "4,1"]) == 0
    assert "T_gel = 0.5" in capsys.readouterr().out


def test_exit_codes(configs, capsys):
    assert cli.run(["bogus"]) == cli.EXIT_USAGE
    assert cli.run(["gelation", "--no-such-flag"]) == cli.EXIT_USAGE
    assert cli.run(["invert", "--V", "1", "--z=-2"]) == cli.EXIT_VALIDATION
    assert cli.run(["gelation", "--V", "0,1;2,0", "--alpha", "1,1"]) == cli.EXIT_VALIDATION
    assert cli.run(["moments", "--V", "1", "--alpha", "1", "--t", "1.5"]) == cli.EXIT_VALIDATION
    assert cli.run(["gelation", "--config", "/nonexistent.json"]) == cli.EXIT_VALIDATION
    capsys.readouterr()


def test_convergence_exit_code(monkeypatch, capsys):
    from vmcoal.errors import ConvergenceError

    def boom(*a, **k):
        raise ConvergenceError("stalled")

    monkeypatch.setattr(cli, "invert_minimal", boom)
    assert cli.run(["invert", "--V", "1", "--z", "2"]) == cli.EXIT_CONVERGENCE
    assert "stalled" in capsys.readouterr().err


def test_threads_env(monkeypatch):
    monkeypatch.setenv("VMCOAL_THREADS", "3")
    assert cli.default_threads() == 3
    monkeypatch.setenv("VMCOAL_THREADS", "zero")
    with pytest.raises(Exception):
        cli.default_threads()


def test_simulate_csv_is_deterministic(tmp_path, capsys):
    args = ["simulate", "--V", "0.6,1;1,0.4", "--alpha", "1,1", "--n", "200", "--t-max", "1",
            "--record-times", "0.5,1", "--seed", "42", "--format", "csv"]
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert cli.run(args + ["--out", str(a)]) == 0
    assert cli.run(args + ["--out", str(b), "--threads", "2"]) == 0
    assert a.read_bytes() == b.read_bytes()
    c = tmp_path / "c.csv"
    assert cli.run(args[:-4] + ["--seed", "43", "--format", "csv", "--out", str(c)]) == 0
    assert a.read_bytes() != c.read_bytes()
    capsys.readouterr()


def test_zeta_and_mass_outputs(tmp_path, capsys):
    out = tmp_path / "z.json"
    assert cli.run(["zeta", "--V", "1", "--alpha", "1", "--n-max", "3", "--t", "0.5", "--out", str(out), "--format", "json"]) == 0
    doc = json.loads(out.read_text())
    assert doc["columns"] == ["t", "composition", "zeta"]
    assert [r[1] for r in doc["rows"]] == ["1", "2", "3"]
    assert cli.run(["mass", "--V", "1", "--alpha", "1", "--t", "2"]) == 0
    assert "0.2031878" in capsys.readouterr().out


def test_validate_writes_deterministic_csv(tmp_path, capsys):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert cli.run(["validate", "kinetics", "--out", str(a)]) == 0
    assert cli.run(["validate", "kinetics", "--out", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()
    text = a.read_text()
    assert text.startswith("suite,criterion,measured,relation,threshold,pass")
    assert "checks passed" in capsys.readouterr().out


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "vmcoal", "gelation", "--V", "1", "--alpha", "2"],
                          capture_output=True, text=True)
    assert proc.returncode == 0
    assert "T_gel = 0.5" in proc.stdout


def test_help_exits_zero(capsys):
    assert cli.run(["--help"]) == 0
    capsys.readouterr()
