"""Study configuration: JSON schema, loading and construction of testbeds.

A config is a JSON object with a mandatory ``schema_version`` (currently 1).
Unknown keys are rejected at every level.  Either ``testbed`` names a built-in
testbed or ``system`` describes a hyperbolic system inline (or points at a JSON
file holding one).
"""

from __future__ import annotations

import copy
import json
from pathlib import Path
from typing import Any, Mapping

import jsonschema
import numpy as np

from .errors import BadConfig
from .selection import parse_complex
from .system import GridDirection, HyperbolicSystem, TransverseDiscretization, operator_factory
from . import testbeds

SCHEMA_VERSION = 1

_complex = {"oneOf": [{"type": "number"},
                      {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2}]}
_matrix = {"type": "array", "items": {"type": "array", "items": {"type": "number"}}, "minItems": 1}
_pos_int = {"type": "integer", "minimum": 1}

TESTBEDS = ("uniform_euler", "shear_euler", "spreading_shear", "sonic_crossing")
SELECTORS = ("greedy", "heuristic", "minimal")

_grid_direction = {
    "type": "object",
    "additionalProperties": False,
    "required": ["bc"],
    "properties": {
        "coords": {"type": "array", "items": {"type": "number"}, "minItems": 1},
        "n": _pos_int,
        "period": {"type": "number", "exclusiveMinimum": 0},
        "bc": {"oneOf": [{"const": "periodic"},
                         {"type": "array", "minItems": 2, "maxItems": 2,
                          "items": {"enum": ["dirichlet", "wall"]}}]},
        "order": {"type": "integer", "enum": [2, 4, 6]},
        "wall_zero": {"type": "array", "items": {"type": "integer", "minimum": 0}},
    },
}

SYSTEM_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["schema_version", "A", "grid"],
    "properties": {
        "schema_version": {"const": SCHEMA_VERSION},
        "A": _matrix,
        "B": {"type": "array", "items": _matrix},
        "C": _matrix,
        "names": {"type": "array", "items": {"type": "string"}},
        "grid": {"type": "array", "items": {"oneOf": [_grid_direction, {"type": "null"}]}},
        "omega_t": {"type": "array", "items": {"type": "number"}},
    },
}

STUDY_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "owns study config",
    "type": "object",
    "additionalProperties": False,
    "required": ["schema_version"],
    "properties": {
        "schema_version": {"const": SCHEMA_VERSION},
        "testbed": {
            "type": "object",
            "additionalProperties": False,
            "required": ["name"],
            "properties": {"name": {"enum": list(TESTBEDS)}, "params": {"type": "object"}},
        },
        "system": {"oneOf": [{"type": "string"}, SYSTEM_SCHEMA]},
        "s": _complex,
        "omega_t": {"type": "array", "items": {"type": "number"}},
        "seed": {"type": "integer", "minimum": 0},
        "threads": _pos_int,
        "selector": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "kinds": {"type": "array", "items": {"enum": list(SELECTORS)}, "minItems": 1},
                "n_starts": _pos_int,
                "exclude_im_above": {"type": "number"},
                "heuristic": {"type": "object"},
            },
        },
        "n_beta_grid": {"type": "array", "items": _pos_int, "minItems": 1},
        "methods": {"type": "array", "items": {"enum": ["ownsp", "ownsr"]}, "minItems": 1},
        "c": _complex,
        "n_trials": _pos_int,
        "spectrum": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"eta_large": {"type": "number", "exclusiveMinimum": 0},
                           "threshold": {"type": "number", "exclusiveMinimum": 0}},
        },
        "march": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "x_start": {"type": "number"},
                "x_stop": {"type": "number"},
                "n_stations": {"type": "integer", "minimum": 2},
                "flavor": {"enum": ["exact", "ownsp", "ownsr"]},
                "scheme": {"enum": ["midpoint", "gauss4", "propagator"]},
                "xi_strategy": {"enum": ["track", "greedy", "heuristic"]},
                "n_beta": _pos_int,
                "component": {"type": "integer", "minimum": 0},
                "inlet_mode": {"type": "integer", "minimum": 0},
                "compare_heuristic_n_beta": _pos_int,
                "diagnose": {"type": "boolean"},
            },
        },
        "output": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"dir": {"type": "string"}, "timings": {"type": "boolean"}},
        },
    },
    "not": {"required": ["testbed", "system"]},
}

DEFAULTS = {
    "selector": {"kinds": ["greedy", "heuristic"], "n_starts": 8},
    "n_beta_grid": [1, 2, 4, 6, 8, 10, 12, 16, 20],
    "methods": ["ownsp", "ownsr"],
    "c": 1.0,
    "n_trials": 20,
    "seed": 0,
    "threads": 1,
    "spectrum": {},
    "march": {"x_start": 0.0, "x_stop": 10.0, "n_stations": 50, "flavor": "ownsp",
              "scheme": "midpoint", "xi_strategy": "track", "n_beta": 10, "inlet_mode": 0,
              "diagnose": False},
    "output": {"dir": "owns_out", "timings": False},
}


def _validate(cfg, schema, what):
    try:
        jsonschema.validate(cfg, schema)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise BadConfig(f"{what} invalid at {where}: {exc.message}") from None


def _merge(base, over):
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def load_config(source, base_dir=None) -> dict:
    """Validate a config (path or mapping) and fill in defaults."""
    if isinstance(source, (str, Path)):
        path = Path(source)
        try:
            raw = json.loads(path.read_text())
        except FileNotFoundError:
            raise BadConfig(f"config file not found: {path}") from None
        except json.JSONDecodeError as exc:
            raise BadConfig(f"config is not valid JSON: {exc}") from None
        base_dir = path.parent if base_dir is None else base_dir
    else:
        raw = copy.deepcopy(dict(source))
    if not isinstance(raw, dict):
        raise BadConfig("config must be a JSON object")
    if "schema_version" not in raw:
        raise BadConfig("schema_version is required")
    _validate(raw, STUDY_SCHEMA, "config")
    if "testbed" not in raw and "system" not in raw:
        raise BadConfig("give either testbed or system")
    cfg = _merge(DEFAULTS, raw)
    if isinstance(cfg.get("system"), str):
        p = Path(cfg["system"])
        if not p.is_absolute() and base_dir is not None:
            p = Path(base_dir) / p
        try:
            cfg["system"] = json.loads(p.read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise BadConfig(f"cannot read system file {p}: {exc}") from None
        _validate(cfg["system"], SYSTEM_SCHEMA, "system file")
    grid = cfg["n_beta_grid"]
    if any(b <= a for a, b in zip(grid, grid[1:])):
        raise BadConfig("n_beta_grid must be strictly increasing")
    m = cfg["march"]
    if m["x_stop"] <= m["x_start"]:
        raise BadConfig("march.x_stop must exceed march.x_start")
    return cfg


# ---------------------------------------------------------------------------
# problem construction
# ---------------------------------------------------------------------------

class Problem:
    """Operator factories for a configured problem, at one or many stations."""

    def __init__(self, cfg: Mapping[str, Any]):
        self.cfg = cfg
        self._tb = None
        if "testbed" in cfg:
            name = cfg["testbed"]["name"]
            params = dict(cfg["testbed"].get("params", {}))
            self.name = name
            self.params = params
            if name in ("uniform_euler", "shear_euler"):
                self._tb = self._make(getattr(testbeds, name), params)
        else:
            self.name = "system"
            self.params = {}
            self._sys_factory = _system_factory(cfg["system"])
        s = cfg.get("s")
        if s is not None:
            self.s = parse_complex(s, "s")
        elif self._tb is not None:
            self.s = self._tb.s
        elif self.name in ("spreading_shear", "sonic_crossing"):
            self.s = 1j * float(self.params.get("omega", 0.3))
        else:
            raise BadConfig("s is required for a system given inline")

    @staticmethod
    def _make(fn, params, *args):
        try:
            return fn(*args, **params)
        except TypeError as exc:
            raise BadConfig(f"bad testbed parameters: {exc}") from None
        except ValueError as exc:
            raise BadConfig(str(exc)) from None

    def at(self, x=None):
        """Testbed or operator factory at marching coordinate ``x``."""
        if self.name == "spreading_shear":
            return self._make(testbeds.spreading_shear, self.params, 0.0 if x is None else x)
        if self.name == "sonic_crossing":
            return self._make(testbeds.sonic_crossing, self.params, 0.0 if x is None else x)
        if self._tb is not None:
            return self._tb
        return self._sys_factory

    def builder(self, x=None):
        obj = self.at(x)
        if hasattr(obj, "operator"):
            return lambda s, tb=obj: tb.operator(s)
        return obj

    @property
    def heuristic_defaults(self) -> dict:
        """Acoustic-branch heuristic for Euler testbeds."""
        from .selection import euler_heuristic_config

        tb = self.at()
        p = getattr(tb, "params", {})
        if "u0" in p:
            u = p["u0"]
        elif "u" in p:
            u = p["u"]
        else:
            raise BadConfig("selector.heuristic must be given for custom systems")
        omega = p.get("omega", abs(self.s))
        y = tb.disc.grid[0]
        h = float(np.min(np.diff(y))) if y is not None and len(y) > 1 else None
        return euler_heuristic_config(1, omega, u, p.get("a", 1.0), h=h)


def _system_factory(spec: Mapping):
    A = np.asarray(spec["A"], dtype=float)
    N = A.shape[-1]
    B = [np.asarray(b, dtype=float) for b in spec.get("B", [])]
    C = np.asarray(spec["C"], dtype=float) if "C" in spec else None
    dirs = []
    for d in spec["grid"]:
        if d is None:
            dirs.append(None)
            continue
        if "coords" in d:
            y = np.asarray(d["coords"], dtype=float)
        elif "n" in d:
            period = float(d.get("period", 2 * np.pi))
            y = np.arange(d["n"]) * (period / d["n"])
        else:
            raise BadConfig("grid directions need coords or n")
        bc = d["bc"] if d["bc"] == "periodic" else tuple(d["bc"])
        dirs.append(GridDirection(coords=y, bc=bc, order=d.get("order", 2),
                                  wall_zero=tuple(d.get("wall_zero", ()))))
    try:
        system = HyperbolicSystem(A=A, B=B, C=C, spatial_dim=len(spec["grid"]) + 1,
                                  names=tuple(spec.get("names", ())) or None)
        disc = TransverseDiscretization(directions=tuple(dirs))
    except ValueError as exc:
        raise BadConfig(str(exc)) from None
    from .system import characteristic_form

    form = characteristic_form(system)
    if N != form.n_vars:
        raise BadConfig("A must be square")
    return operator_factory(form, disc, tuple(spec.get("omega_t", ())))
