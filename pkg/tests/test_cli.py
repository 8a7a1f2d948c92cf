import json
import subprocess
import sys

import numpy as np
import pytest

from specband import cli

S3, S7 = np.sqrt(3.0), np.sqrt(7.0)


def run_cli(capsys, *argv):
    code = cli.run(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def test_bands_example(tmp_path, capsys):
    code, out, _ = run_cli(capsys, "bands", "--v", "[-5,0,1]", "--out", str(tmp_path))
    assert code == 0
    assert "q=2" in out
    rows = np.loadtxt(tmp_path / "bands.csv", delimiter=",", skiprows=1)
    assert np.allclose(rows[:, 1:], [[-S7, -S3], [S3, S7]], atol=1e-12)
    cfg = json.loads((tmp_path / "resolved-config.json").read_text())
    assert cfg["subcommand"] == "bands" and cfg["potential"]["v"] == [-5, 0, 1]


def test_json_format(tmp_path, capsys):
    code, _, _ = run_cli(capsys, "bands", "--v", "[0,-1]", "--format", "json", "--out", str(tmp_path))
    assert code == 0
    files = [p.name for p in tmp_path.iterdir()]
    assert "bands.json" in files and "bands.csv" not in files


def test_invalid_potential_exit_2(tmp_path, capsys):
    code, _, err = run_cli(capsys, "bands", "--v", "[1]", "--out", str(tmp_path))
    assert code == 2
    assert "[potential." in err


def test_invalid_operator_exit_2(tmp_path, capsys):
    code, _, err = run_cli(capsys, "hill", "--set", "r=[1,-1]", "--out", str(tmp_path))
    assert code == 2 and "[jacobi." in err


def test_unknown_config_key_rejected(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"subcommand": "bands", "colour": "red"}))
    code, _, err = run_cli(capsys, "bands", "--config", str(cfg), "--out", str(tmp_path / "o"))
    assert code == 2 and "colour" in err
    code, _, err = run_cli(capsys, "gap", "--set", "radius=3", "--out", str(tmp_path / "o"))
    assert code == 2 and "radius" in err


def test_bad_json_flag(tmp_path, capsys):
    code, _, _ = run_cli(capsys, "bands", "--v", "[1,", "--out", str(tmp_path))
    assert code == 2


def test_numerical_failure_exit_3(tmp_path, capsys):
    code, _, err = run_cli(capsys, "theta-fit", "--set", "targets=[5.5,1.1,5.5,1.1,5.5,1.1]",
                           "--out", str(tmp_path))
    assert code == 3 and "[riemann." in err


def test_flags_override_config(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"subcommand": "gap", "seed": 4, "params": {"n": 6}}))
    code, _, _ = run_cli(capsys, "gap", "--config", str(cfg), "--seed", "9", "--out", str(tmp_path / "o"))
    assert code == 0
    resolved = json.loads((tmp_path / "o" / "resolved-config.json").read_text())
    assert resolved["seed"] == 9 and resolved["params"]["n"] == 6
    assert resolved["params"]["quad_order"] == 40


def test_resolved_config_round_trip(tmp_path, capsys):
    first = tmp_path / "a"
    code, _, _ = run_cli(capsys, "gap", "--set", "n=5", "--set", "interval=[0,0.7]", "--out", str(first))
    assert code == 0
    code, _, _ = run_cli(capsys, "gap", "--config", str(first / "resolved-config.json"),
                         "--out", str(tmp_path / "b"))
    assert code == 0
    for f in first.iterdir():
        if f.name != "resolved-config.json":
            assert (tmp_path / "b" / f.name).read_bytes() == f.read_bytes()
    a = json.loads((first / "resolved-config.json").read_text())
    b = json.loads((tmp_path / "b" / "resolved-config.json").read_text())
    a.pop("out"), b.pop("out")
    assert a == b


def test_mc_reproducible(tmp_path, capsys):
    outs = []
    for name in ("x", "y"):
        d = tmp_path / name
        code, line, _ = run_cli(capsys, "mc", "--v", "[-5,0,1]", "--seed", "7", "--set", "n=10",
                                "--set", "sweeps=400", "--set", "chains=2", "--out", str(d))
        assert code == 0
        outs.append((line, (d / "statistics.csv").read_bytes()))
    assert outs[0] == outs[1]


def test_outputs_confined_to_out_dir(tmp_path, capsys, monkeypatch):
    monkeypatch.chdir(tmp_path)
    code, _, _ = run_cli(capsys, "recurrence", "--set", "n=10", "--set", "l_max=12", "--out", "res")
    assert code == 0
    assert [p.name for p in tmp_path.iterdir()] == ["res"]


def test_workers_from_environment(tmp_path, capsys, monkeypatch):
    monkeypatch.setenv("SPECBAND_WORKERS", "2")
    code, _, _ = run_cli(capsys, "bands", "--out", str(tmp_path))
    assert code == 0
    assert json.loads((tmp_path / "resolved-config.json").read_text())["workers"] == 2


@pytest.mark.parametrize("argv", [
    ["equilibrium", "--set", "grid_size=1000"],
    ["ids", "--set", "m=200", "--set", "grid=51"],
    ["hill"],
    ["lyapunov", "--set", "grid=21"],
    ["surface"],
    ["theta-fit"],
    ["covariance", "--set", "n_list=[8]", "--set", "sweeps=2000", "--set", "chains=2",
     "--set", 'phi1={"kind":"polynomial","coeffs":[0,0,1]}',
     "--set", 'phi2={"kind":"polynomial","coeffs":[0,0,1]}'],
])
def test_subcommands_run(tmp_path, capsys, argv):
    code, out, _ = run_cli(capsys, *argv, "--v", "[-5,0,1]", "--out", str(tmp_path))
    assert code == 0 and out.startswith(argv[0])


def test_console_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "specband.cli", "bands", "--out", str(tmp_path)],
                          capture_output=True, text=True)
    assert proc.returncode == 0 and proc.stdout.startswith("bands")
