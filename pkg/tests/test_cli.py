import json
import math
import subprocess
import sys

import pytest

from torus_patches.cli import OUTPUT_ENV, identity_battery, main


@pytest.fixture(autouse=True)
def _no_env_output(monkeypatch):
    monkeypatch.delenv(OUTPUT_ENV, raising=False)


def read(path):
    return json.loads(path.read_text())


def test_identities_pass(tmp_path, capsys):
    assert main(["identities", "--rho", "0.3", "--output-dir", str(tmp_path)]) == 0
    doc = read(tmp_path / "identities.json")
    assert doc["schema_version"] == 1 and doc["seeds"] == {}
    assert doc["config"]["rho"] == 0.3
    assert all(r["pass"] for r in doc["result"]["identities"])
    assert json.loads(capsys.readouterr().out)["identities"]


def test_identity_failure_exit_code(tmp_path):
    assert main(["identities", "--rho", "0.3", "--tol", "1e-30", "--output-dir", str(tmp_path)]) == 4


def test_identity_battery_all_rho():
    for rho in (0.1, 0.3, 0.6):
        assert all(r["pass"] for r in identity_battery(rho))


def test_bad_rho_is_config_error(tmp_path):
    assert main(["identities", "--rho", "0", "--output-dir", str(tmp_path)]) == 2
    assert main(["identities", "--rho", "1.5", "--output-dir", str(tmp_path)]) == 2


def test_missing_field_is_config_error(tmp_path, capsys):
    assert main(["patch", "solve", "--rho", "0.3", "--eps", "0.01", "--output-dir", str(tmp_path)]) == 2
    assert json.loads(capsys.readouterr().err)["error"] == "config"


def test_unreadable_config(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert main(["identities", "--config", str(bad), "--output-dir", str(tmp_path)]) == 2


def test_numerical_failure_exit_code(tmp_path):
    argv = ["patch", "solve", "--rho", "0.3", "--N", "3", "--eps", "0.08", "--M", "64", "--J", "8"]
    argv += ["--max-newton", "1", "--output-dir", str(tmp_path)]
    assert main(argv) == 3
    assert read(tmp_path / "error.json")["type"] == "NoConvergence"


def test_config_file_with_flag_override(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"rho": 0.3, "x": [1.0, 0.5], "y": [2.2, 0.9]}))
    assert main(["green", "eval", "--config", str(cfg), "--output-dir", str(tmp_path)]) == 0
    g1 = read(tmp_path / "green.json")["result"]["G"]
    assert g1 == pytest.approx(0.01560203068406246, abs=1e-13)
    assert main(["green", "eval", "--config", str(cfg), "--rho", "0.5", "--output-dir", str(tmp_path)]) == 0
    doc = read(tmp_path / "green.json")
    assert doc["config"]["rho"] == 0.5 and doc["result"]["G"] != g1


def test_output_dir_precedence(tmp_path, monkeypatch):
    env_dir, cfg_dir, flag_dir = tmp_path / "env", tmp_path / "cfg", tmp_path / "flag"
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"rho": 0.3, "output_dir": str(cfg_dir)}))
    assert main(["identities", "--config", str(cfg)]) == 0
    assert (cfg_dir / "identities.json").exists()
    monkeypatch.setenv(OUTPUT_ENV, str(env_dir))
    assert main(["identities", "--config", str(cfg)]) == 0
    assert (env_dir / "identities.json").exists()
    assert main(["identities", "--config", str(cfg), "--output-dir", str(flag_dir)]) == 0
    assert (flag_dir / "identities.json").exists()


def test_green_grid_csv(tmp_path):
    argv = ["green", "eval", "--rho", "0.3", "--x", "1", "0.5", "--y", "2", "0.3", "--grid", "4"]
    assert main(argv + ["--output-dir", str(tmp_path)]) == 0
    lines = (tmp_path / "green_grid.csv").read_text().splitlines()
    assert len(lines) == 1 + 16


def test_equilibrium_ring(tmp_path):
    assert main(["equilibrium", "ring", "--rho", "0.3", "--N", "3", "--output-dir", str(tmp_path)]) == 0
    res = read(tmp_path / "equilibrium_ring.json")["result"]
    assert res["hessian_rank"] == 4


def test_equilibrium_check_rejects_coincident_centers(tmp_path):
    argv = ["equilibrium", "check", "--rho", "0.3", "--centers", "[[1,0.5],[1,0.5]]", "--circulations", "[1,1]"]
    assert main(argv + ["--output-dir", str(tmp_path)]) == 3


def test_patch_solve_outputs_and_determinism(tmp_path):
    argv = ["patch", "solve", "--rho", "0.3", "--N", "3", "--eps", "0.02", "--M", "64", "--J", "8"]
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(argv + ["--output-dir", str(a)]) == 0
    assert main(argv + ["--output-dir", str(b)]) == 0
    assert (a / "patch_solve.json").read_bytes() == (b / "patch_solve.json").read_bytes()
    doc = read(a / "patch_solve.json")
    assert doc["result"]["residual_norm"] <= 1e-10
    assert doc["result"]["gamma"] == pytest.approx(3 * math.pi, rel=1e-4)
    csv = (a / "boundary_patch0.csv").read_text().splitlines()
    assert csv[0] == "s,x1,x2,R" and len(csv) == 65


def test_patch_continue_short_grid(tmp_path):
    argv = ["patch", "continue", "--rho", "0.3", "--N", "3", "--M", "64", "--J", "8", "--eps-grid", "0,0.01,0.02"]
    assert main(argv + ["--output-dir", str(tmp_path)]) == 0
    doc = read(tmp_path / "patch_continue.json")
    assert doc["result"]["failure"] is None and len(doc["result"]["states"]) == 3


def test_invalid_eps_grid(tmp_path):
    argv = ["patch", "continue", "--rho", "0.3", "--N", "3", "--eps-grid", "0.01,0.02"]
    assert main(argv + ["--output-dir", str(tmp_path)]) == 2


def test_module_entry_point(tmp_path):
    proc = subprocess.run(
        [sys.executable, "-m", "torus_patches", "identities", "--rho", "0.6", "--output-dir", str(tmp_path)],
        capture_output=True,
        text=True,
    )
    assert proc.returncode == 0
    assert (tmp_path / "identities.json").exists()
