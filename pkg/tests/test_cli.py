import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from kolmo.cli import UsageError, _parse_tol, main, read_config
from kolmo.discretization import load_field


def run(tmp_path, *args, sub="out"):
    out = tmp_path / sub
    code = main([*args, "--out", str(out)])
    return code, out


def test_verify_geometry_writes_reports(tmp_path, capsys):
    code, out = run(tmp_path, "verify", "geometry", "--seed", "42", "--n", "20000")
    assert code == 0
    assert "PASS  associativity" in capsys.readouterr().out
    rep = json.loads((out / "report.json").read_text())
    assert rep["passed"] and rep["params"]["config"]["seed"] == 42
    with open(out / "trials.csv", newline="") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["experiment", "trial", "seed", "p", "q", "d", "grid", "value", "stderr"]


def test_reports_are_reproducible(tmp_path):
    _, a = run(tmp_path, "verify", "geometry", "--seed", "5", "--n", "20000", sub="a")
    _, b = run(tmp_path, "verify", "geometry", "--seed", "5", "--n", "20000", sub="b")
    assert (a / "report.json").read_bytes() == (b / "report.json").read_bytes()
    assert (a / "trials.csv").read_bytes() == (b / "trials.csv").read_bytes()


def test_missing_seed_is_usage_error(tmp_path, capsys):
    code, _ = run(tmp_path, "verify", "geometry")
    assert code == 2
    assert "--seed is required" in capsys.readouterr().err


def test_bad_subcommand():
    assert main(["run", "nothing", "--seed", "1"]) == 2


def test_non_power_of_two_grid(tmp_path, capsys):
    code, _ = run(tmp_path, "run", "lower-order", "--seed", "0", "--grid", "60,64,64")
    assert code == 2
    assert "power of two" in capsys.readouterr().err


def test_infeasible_weak_grid_reports_sizing(tmp_path, capsys):
    code, _ = run(tmp_path, "run", "weak11", "--seed", "0", "--grid", "64,128,32")
    assert code == 2
    assert "refine the grid to spacing" in capsys.readouterr().err


def test_wrong_grid_arity(tmp_path):
    code, _ = run(tmp_path, "run", "lower-order", "--seed", "0", "--grid", "32,32")
    assert code == 2


def test_injected_fault_fails_kernel_suite(tmp_path, capsys):
    code, out = run(tmp_path, "verify", "kernel", "--seed", "3", "--inject-fault", "gamma1")
    assert code == 1
    assert "FAIL  gamma1_finite_differences" in capsys.readouterr().out
    rep = json.loads((out / "report.json").read_text())
    assert rep["criteria"]["gamma1_finite_differences"] is False
    assert rep["criteria"]["gamma2_dual_route"] is True


def test_lower_order_run(tmp_path):
    code, out = run(tmp_path, "run", "lower-order", "--seed", "0", "--grid", "32,32,32", "--box", "8,8,8",
                    "--tol", "stability=0.5")
    assert code == 0
    rep = json.loads((out / "report.json").read_text())
    assert rep["params"]["config"]["tol"] == {"stability": 0.5}
    assert "u_stable<0.5" in rep["criteria"]


def test_config_file_and_flag_precedence(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# lower-order run\nseed = 9\ngrid = 32,32,32\nbox = 8,8,8\ntol = stability=0.5\n")
    code, out = run(tmp_path, "run", "lower-order", "--config", str(cfg), "--seed", "11")
    assert code == 0
    conf = json.loads((out / "report.json").read_text())["params"]["config"]
    assert conf["seed"] == 11 and conf["grid"] == "32,32,32"


def test_read_config_rejects_unknown_key(tmp_path):
    p = tmp_path / "bad.cfg"
    p.write_text("colour = blue\n")
    with pytest.raises(UsageError):
        read_config(p)


def test_parse_tol():
    assert _parse_tol(["a=1", "b=2,c=3e-4"]) == {"a": 1.0, "b": 2.0, "c": 3e-4}
    with pytest.raises(UsageError):
        _parse_tol(["a"])
    with pytest.raises(UsageError):
        _parse_tol(["a=x"])


def test_solver_suite_exports_field(tmp_path):
    code, out = run(tmp_path, "verify", "solver", "--seed", "0")
    assert code == 0
    f = load_field(out / "fields" / "manufactured_u")
    side = json.loads((out / "fields" / "manufactured_u.json").read_text())
    assert side["meta"]["seed"] == 0
    assert f.values.shape == (128, 128, 128)
    assert np.max(f.values) == pytest.approx(1.0, abs=1e-3)


def test_module_entry_point(tmp_path):
    r = subprocess.run([sys.executable, "-m", "kolmo", "--version"], capture_output=True, text=True)
    assert r.returncode == 0 and r.stdout.startswith("kolmo ")
