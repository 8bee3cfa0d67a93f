import json

import numpy as np
import pytest

from owns.config import DEFAULTS, Problem, load_config
from owns.errors import BadConfig
from owns.spectral import full_spectrum


def base(**kw):
    cfg = {"schema_version": 1, "testbed": {"name": "uniform_euler", "params": {"n_nodes": 4}}}
    cfg.update(kw)
    return cfg


def test_defaults_are_filled():
    cfg = load_config(base())
    assert cfg["n_beta_grid"] == DEFAULTS["n_beta_grid"]
    assert cfg["march"]["scheme"] == "midpoint"
    assert cfg["output"]["timings"] is False


def test_nested_override_keeps_other_defaults():
    cfg = load_config(base(march={"n_beta": 4}))
    assert cfg["march"]["n_beta"] == 4 and cfg["march"]["flavor"] == "ownsp"


@pytest.mark.parametrize("cfg", [
    {"testbed": {"name": "uniform_euler"}},
    base(schema_version=2),
    base(colour="red"),
    base(n_beta_grid=[4, 2]),
    base(n_beta_grid=[0]),
    base(march={"x_start": 1.0, "x_stop": 0.0}),
    {"schema_version": 1},
    base(system="other.json"),
    {"schema_version": 1, "testbed": {"name": "not_a_testbed"}},
])
def test_invalid_configs(cfg):
    with pytest.raises(BadConfig):
        load_config(cfg)


def test_load_from_file_and_errors(tmp_path):
    p = tmp_path / "c.json"
    p.write_text(json.dumps(base()))
    assert load_config(p)["testbed"]["name"] == "uniform_euler"
    with pytest.raises(BadConfig):
        load_config(tmp_path / "missing.json")
    bad = tmp_path / "bad.json"
    bad.write_text("{")
    with pytest.raises(BadConfig):
        load_config(bad)


def test_inline_system_matches_scalar_operator(tmp_path):
    sysfile = tmp_path / "sys.json"
    sysfile.write_text(json.dumps({"schema_version": 1, "A": [[2.0, 0.0], [0.0, -1.0]],
                                   "grid": []}))
    cfg = load_config({"schema_version": 1, "system": "sys.json", "s": [0.0, 0.5]},
                      base_dir=tmp_path)
    prob = Problem(cfg)
    op = prob.builder()(prob.s)
    np.testing.assert_allclose(np.diag(op.M), [-0.5j / 2.0, 0.5j / 1.0])


def test_inline_system_needs_s():
    cfg = load_config({"schema_version": 1, "system": {"schema_version": 1, "A": [[1.0]],
                                                       "grid": []}})
    with pytest.raises(BadConfig):
        Problem(cfg)


def test_bad_testbed_params():
    with pytest.raises(BadConfig):
        Problem(load_config(base(testbed={"name": "uniform_euler", "params": {"bogus": 1}})))


def test_problem_at_varies_along_x():
    cfg = load_config({"schema_version": 1,
                       "testbed": {"name": "spreading_shear", "params": {"n_nodes": 6}}})
    prob = Problem(cfg)
    assert prob.s == 0.3j
    a = prob.builder(0.0)(prob.s).M
    b = prob.builder(5.0)(prob.s).M
    assert np.linalg.norm(a - b) > 0


def test_heuristic_defaults_for_euler():
    prob = Problem(load_config(base()))
    cfg = prob.heuristic_defaults
    assert cfg["mirror"] == "conjugate"
    spec = full_spectrum(prob.builder(), prob.s)
    assert spec.n == 16
