import json
import subprocess
import sys

import pytest

from owns import io
from owns.cli import EXIT_CONFIG, main

SMALL = {"schema_version": 1,
         "testbed": {"name": "uniform_euler", "params": {"n_nodes": 4}},
         "n_beta_grid": [1, 2, 4],
         "selector": {"kinds": ["greedy", "heuristic", "minimal"], "n_starts": 2},
         "n_trials": 4,
         "march": {"x_stop": 1.0, "n_stations": 4, "n_beta": 3,
                   "compare_heuristic_n_beta": 4}}


def write_cfg(tmp_path, cfg=SMALL):
    p = tmp_path / "cfg.json"
    p.write_text(json.dumps(cfg))
    return str(p)


def run(tmp_path, command, name="out", cfg=SMALL, extra=()):
    out = tmp_path / name
    code = main([command, "--config", write_cfg(tmp_path, cfg), "--out", str(out), *extra], env={})
    return code, out


def test_spectrum_command(tmp_path):
    code, out = run(tmp_path, "spectrum")
    assert code == 0
    rows = io.read_csv(out / "spectrum.csv")
    assert len(rows) == 16
    meta = json.loads((out / "spectrum.meta.json").read_text())
    assert meta["n_plus"] == 12 and meta["command"] == "spectrum"


def test_select_command(tmp_path):
    code, out = run(tmp_path, "select")
    assert code == 0
    rows = io.read_csv(out / "convergence.csv")
    assert {r["selector"] for r in rows} == {"greedy", "heuristic", "minimal"}
    assert (out / "xi" / "greedy_4.csv").exists()
    assert "greedy_2" in json.loads((out / "xi.json").read_text())


@pytest.mark.parametrize("command,files", [
    ("study", ["study_ownsp_greedy.csv", "study_ownsr_heuristic.csv"]),
    ("march", ["march.csv", "cost.csv"]),
])
def test_outputs_are_deterministic(tmp_path, command, files):
    assert run(tmp_path, command, "a")[0] == 0
    assert run(tmp_path, command, "b", extra=("--threads", "2"))[0] == 0
    for f in files:
        assert (tmp_path / "a" / f).read_text() == (tmp_path / "b" / f).read_text()


def test_march_cost_columns(tmp_path):
    code, out = run(tmp_path, "march")
    assert code == 0
    cost = io.read_csv(out / "cost.csv")
    assert [r["selector"] for r in cost] == ["track", "heuristic"]
    assert cost[1]["speedup"] == "1.0" and cost[0]["wall_ms"] == ""
    assert len(io.read_csv(out / "march.csv")) == 4


@pytest.mark.parametrize("change", [
    {"n_beta_grid": [0]},
    {"testbed": {"name": "uniform_euler", "params": {"n_nodes": 0}}},
    {"extra_key": 1},
])
def test_config_errors_exit_2(tmp_path, change, capsys):
    code, out = run(tmp_path, "select", cfg={**SMALL, **change})
    assert code == EXIT_CONFIG
    err = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert err["exit_code"] == EXIT_CONFIG and err["command"] == "select"
    assert json.loads((out / "error.json").read_text())["error"] == err["error"]


def test_missing_config_and_bad_seed(tmp_path):
    assert main(["spectrum"], env={}) == EXIT_CONFIG
    assert run(tmp_path, "spectrum", extra=("--seed", "abc"))[0] == EXIT_CONFIG


def test_env_overrides_config(tmp_path):
    cfg = write_cfg(tmp_path)
    out = tmp_path / "env_out"
    assert main(["spectrum", "--config", cfg], env={"OWNS_OUT": str(out), "OWNS_SEED": "5"}) == 0
    assert json.loads((out / "spectrum.meta.json").read_text())["seed"] == 5


def test_console_module_entry(tmp_path):
    cfg = write_cfg(tmp_path)
    proc = subprocess.run([sys.executable, "-m", "owns", "spectrum", "--config", cfg,
                           "--out", str(tmp_path / "sub")], capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert (tmp_path / "sub" / "spectrum.csv").exists()
