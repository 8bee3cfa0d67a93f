"""Command-line front end: ``owns {spectrum,select,study,march}``.

Settings are resolved in the order command-line flag, environment variable
(``OWNS_SEED``, ``OWNS_THREADS``, ``OWNS_OUT``), config file, built-in default.
Every command writes CSV bodies that depend only on config and seed, plus a
``.meta.json`` sidecar carrying timestamps and timings.  On failure a
machine-readable error object is printed to stderr (and written to
``error.json`` when the output directory is known) and the exit code is nonzero.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
import time
import traceback
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import io
from .config import Problem, load_config
from .diagnostics import STUDY_COLUMNS, run_study
from .errors import BadConfig, OWNSError
from .marching import StationSequence, march
from .selection import greedy_select, heuristic_select, minimal_set_ownsp, objectives, parse_complex
from .spectral import full_spectrum

log = logging.getLogger("owns")

EXIT_CONFIG = 2
EXIT_FAILURE = 1


def _config_hash(cfg) -> str:
    return hashlib.sha256(json.dumps(io._jsonable(cfg), sort_keys=True).encode()).hexdigest()


class Run:
    """Resolved settings plus the bookkeeping shared by all commands."""

    def __init__(self, args, env=None):
        env = os.environ if env is None else env
        if args.config is None:
            raise BadConfig("--config is required")
        self.cfg = load_config(args.config)
        self.seed = self._pick(args.seed, env.get("OWNS_SEED"), self.cfg["seed"], int, "seed")
        self.threads = self._pick(args.threads, env.get("OWNS_THREADS"), self.cfg["threads"], int,
                                  "threads")
        out = args.out or env.get("OWNS_OUT") or self.cfg["output"]["dir"]
        self.out = Path(out)
        if self.seed < 0 or self.threads < 1:
            raise BadConfig("seed must be >= 0 and threads >= 1")
        self.timings = bool(self.cfg["output"]["timings"])
        self.problem = Problem(self.cfg)
        self.t0 = time.perf_counter()
        self.written = []

    @staticmethod
    def _pick(flag, env, cfg, cast, name):
        for v in (flag, env):
            if v is not None and v != "":
                try:
                    return cast(v)
                except ValueError:
                    raise BadConfig(f"{name} must be an integer, got {v!r}") from None
        return cast(cfg)

    def exclude(self):
        lim = self.cfg["selector"].get("exclude_im_above")
        return None if lim is None else (lambda a, lim=lim: a.imag > lim)

    def heuristic(self):
        return self.cfg["selector"].get("heuristic") or self.problem.heuristic_defaults

    def spectrum(self, x=None):
        sc = self.cfg["spectrum"]
        return full_spectrum(self.problem.builder(x), self.problem.s,
                             eta_large=sc.get("eta_large"), threshold=sc.get("threshold", 10.0))

    def write(self, name, columns, rows, **meta):
        path = io.write_csv(self.out / name, columns, rows)
        io.write_metadata(path, {"command": meta.pop("command", None), "seed": self.seed,
                                 "threads": self.threads, "config_sha256": _config_hash(self.cfg),
                                 **meta})
        self.written.append(str(path))
        return path

    def write_json(self, name, payload):
        path = io.write_json(self.out / name, payload)
        self.written.append(str(path))
        return path


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_spectrum(run: Run):
    t = time.perf_counter()
    spec = run.spectrum()
    run.write("spectrum.csv", io.SPECTRUM_COLUMNS, io.spectrum_rows(spec), command="spectrum",
              n=spec.n, n_plus=spec.n_plus, n_minus=spec.n_minus, eta_large=spec.eta_used,
              s=spec.s_used, cond_V=spec.cond_V, dense_eigs=spec.n_dense_eigs,
              wall_ms=1e3 * (time.perf_counter() - t))
    return spec


def _select(run: Run, spec, kind, nb):
    if kind == "greedy":
        return greedy_select(spec, nb, n_starts=run.cfg["selector"]["n_starts"], seed=run.seed,
                             exclude=run.exclude(), n_jobs=run.threads)
    if kind == "heuristic":
        return heuristic_select(run.heuristic(), nb)
    return minimal_set_ownsp(spec)


def cmd_select(run: Run):
    spec = run.spectrum()
    rows, xis = [], {}
    timing = {}
    for kind in run.cfg["selector"]["kinds"]:
        grid = [min(spec.n_plus, spec.n_minus)] if kind == "minimal" else run.cfg["n_beta_grid"]
        t = time.perf_counter()
        for nb in grid:
            xi = _select(run, spec, kind, nb)
            rep = objectives(spec, xi, run.exclude())
            rows.append({"n_beta": xi.n_beta, "selector": kind, "J_ownsp": rep.J_ownsp,
                         "J_ownsr": rep.J_ownsr, "max_J_plus": rep.max_plus,
                         "max_J_minus": rep.max_minus})
            xis[f"{kind}_{xi.n_beta}"] = io.xi_to_dict(xi)
            run.write(f"xi/{kind}_{xi.n_beta}.csv", io.XI_COLUMNS, io.xi_rows(xi), command="select")
        timing[kind] = 1e3 * (time.perf_counter() - t)
    run.write("convergence.csv", io.CONVERGENCE_COLUMNS, rows, command="select",
              n_plus=spec.n_plus, n_minus=spec.n_minus, wall_ms=timing)
    run.write_json("xi.json", xis)
    return rows


def cmd_study(run: Run):
    spec = run.spectrum()
    cells = [(m, k) for m in run.cfg["methods"] for k in run.cfg["selector"]["kinds"]]
    c = parse_complex(run.cfg["c"], "c")

    def one(cell):
        method, kind = cell
        return run_study(spec, run.cfg["n_beta_grid"], method, kind, seed=run.seed,
                         n_starts=run.cfg["selector"]["n_starts"],
                         heuristic=run.heuristic() if kind == "heuristic" else None, c=c,
                         n_trials=run.cfg["n_trials"], exclude=run.exclude())

    # cells on a bounded pool; a single collector writes the files in cell order
    with ThreadPoolExecutor(max_workers=run.threads) as pool:
        studies = list(pool.map(one, cells))
    for (method, kind), st in zip(cells, studies):
        rows = [r.row() for r in st.records]
        walls = [r["wall_ms"] for r in rows]
        if not run.timings:
            for r in rows:
                r["wall_ms"] = None
        run.write(f"study_{method}_{kind}.csv", STUDY_COLUMNS, rows, command="study",
                  method=method, selector=kind, n_plus=spec.n_plus, n_minus=spec.n_minus,
                  wall_ms=walls)
    return studies


def cmd_march(run: Run):
    m = run.cfg["march"]
    x = np.linspace(m["x_start"], m["x_stop"], m["n_stations"])
    spec0 = run.spectrum(x[0])
    k = m["inlet_mode"]
    if k >= spec0.n_plus:
        raise BadConfig(f"inlet_mode {k} exceeds the {spec0.n_plus} downstream modes")
    seq = StationSequence(x, lambda xx: run.problem.at(xx), spec0.V[:, k], run.problem.s)
    c = parse_complex(run.cfg["c"], "c")

    def go(strategy, nb):
        return march(seq, m["flavor"], strategy, m["scheme"], n_beta=nb,
                     n_starts=run.cfg["selector"]["n_starts"], seed=run.seed, c=c,
                     exclude=run.exclude(), component=m.get("component"),
                     diagnose=m["diagnose"],
                     heuristic=run.heuristic() if strategy == "heuristic" else None)

    res = go(m["xi_strategy"], m["n_beta"])
    run.write("march.csv", io.MARCH_COLUMNS, res.rows(timings=run.timings), command="march",
              n_factor=res.n_factor, n_regreedy=res.n_regreedy, dense_eigs=res.n_dense_eigs,
              metadata=res.metadata, wall_ms=[cst["wall_ms"] for cst in res.cost_log])
    out = [res]
    nb_h = m.get("compare_heuristic_n_beta")
    if nb_h is not None and m["flavor"] != "exact":
        heur = go("heuristic", nb_h)
        out.append(heur)
        # deterministic cost proxy: every filter application costs one solve per level
        rows, walls = [], {}
        for name, r, nb in ((m["xi_strategy"], res, m["n_beta"]), ("heuristic", heur, nb_h)):
            walls[name] = sum(cst["wall_ms"] for cst in r.cost_log)
            rows.append({"selector": name, "n_beta": nb,
                         "level_solves": nb * sum(cst["filter_applications"] for cst in r.cost_log),
                         "wall_ms": walls[name] if run.timings else None})
        base = rows[1]["level_solves"]
        for r in rows:
            r["speedup"] = base / r["level_solves"] if r["level_solves"] else None
        run.write("cost.csv", io.COST_COLUMNS, rows, command="march", wall_ms=walls,
                  speedup_wall={k: walls["heuristic"] / v for k, v in walls.items() if v})
    return out


COMMANDS = {"spectrum": cmd_spectrum, "select": cmd_select, "study": cmd_study, "march": cmd_march}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="owns", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {"spectrum": "classified spectrum of M", "select": "recursion parameters and objectives",
             "study": "projection-error study over n_beta", "march": "march with parameter tracking"}
    for name in COMMANDS:
        p = sub.add_parser(name, help=helps[name])
        p.add_argument("--config", required=False, help="study config (JSON)")
        p.add_argument("--out", help="output directory")
        p.add_argument("--seed", help="random seed (u64)")
        p.add_argument("--threads", help="worker threads")
    return parser


def _fail(exc, out, code, command):
    payload = {"error": type(exc).__name__, "message": str(exc), "command": command,
               "exit_code": code}
    if code == EXIT_FAILURE and not isinstance(exc, OWNSError):
        payload["traceback"] = traceback.format_exc()
    print(json.dumps(payload), file=sys.stderr)
    if out is not None:
        try:
            io.write_json(Path(out) / "error.json", payload)
        except OSError:
            pass
    return code


def main(argv=None, env=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    env = os.environ if env is None else env
    out = args.out or env.get("OWNS_OUT")
    try:
        run = Run(args, env)
        out = run.out
        COMMANDS[args.command](run)
    except BadConfig as exc:
        return _fail(exc, out, EXIT_CONFIG, args.command)
    except (OWNSError, np.linalg.LinAlgError, ValueError) as exc:
        return _fail(exc, out, EXIT_FAILURE, args.command)
    log.info("wrote %d files to %s", len(run.written), run.out)
    return 0


def main_entry():
    sys.exit(main())


if __name__ == "__main__":
    main_entry()
