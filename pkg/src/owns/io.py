"""CSV and JSON artifacts.

CSV bodies are deterministic: floats use ``repr`` (shortest round-trip form),
booleans are written as ``true``/``false`` and missing values as empty fields.
Anything run-dependent, such as timestamps and timings, goes into a ``.meta.json``
sidecar next to the CSV.
"""

from __future__ import annotations

import csv
import json
import platform
import time
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .filters import RecursionParamSet
from .spectral import DOWNSTREAM, Spectrum

SPECTRUM_COLUMNS = ("index", "re_alpha", "im_alpha", "label", "re_alpha_eta", "im_alpha_eta")
XI_COLUMNS = ("j", "re_beta_plus", "im_beta_plus", "re_beta_minus", "im_beta_minus", "origin")
MARCH_COLUMNS = ("x", "amplitude", "n_factor_running", "refresh_flag", "j_ownsp", "j_ownsr",
                 "wall_ms")
CONVERGENCE_COLUMNS = ("n_beta", "selector", "J_ownsp", "J_ownsr", "max_J_plus", "max_J_minus")
COST_COLUMNS = ("selector", "n_beta", "level_solves", "wall_ms", "speedup")


def _cell(v):
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_csv(path, columns: Sequence[str], rows: Iterable[Mapping]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([_cell(r.get(c)) for c in columns])
    return path


def read_csv(path) -> list[dict]:
    with Path(path).open(newline="") as fh:
        return list(csv.DictReader(fh))


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (complex, np.complexfloating)):
        return [float(obj.real), float(obj.imag)]
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, Path):
        return str(obj)
    return obj


def write_json(path, payload) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(_jsonable(payload), indent=2, sort_keys=True) + "\n")
    return path


def write_metadata(csv_path, payload: Mapping) -> Path:
    """Sidecar ``<name>.meta.json`` with run-dependent information."""
    import numpy, scipy

    from . import __version__

    meta = {"created_unix": time.time(), "created": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
            "python": platform.python_version(), "numpy": numpy.__version__,
            "scipy": scipy.__version__, "owns": __version__}
    meta.update(payload)
    p = Path(csv_path)
    return write_json(p.with_name(p.stem + ".meta.json"), meta)


# ---------------------------------------------------------------------------
# domain rows
# ---------------------------------------------------------------------------

def spectrum_rows(spec: Spectrum):
    eta = spec.alphas_eta if spec.alphas_eta is not None else np.full(spec.n, np.nan + 0j)
    for k in range(spec.n):
        yield {"index": k, "re_alpha": spec.alphas[k].real, "im_alpha": spec.alphas[k].imag,
               "label": "downstream" if spec.labels[k] == DOWNSTREAM else "upstream",
               "re_alpha_eta": eta[k].real, "im_alpha_eta": eta[k].imag}


def xi_rows(xi: RecursionParamSet):
    for j in range(xi.n_beta):
        bp, bm = xi.beta_plus[j], xi.beta_minus[j]
        yield {"j": j, "re_beta_plus": bp.real, "im_beta_plus": bp.imag,
               "re_beta_minus": bm.real, "im_beta_minus": bm.imag, "origin": xi.origin}


def xi_to_dict(xi: RecursionParamSet) -> dict:
    return {"origin": xi.origin,
            "beta_plus": [[b.real, b.imag] for b in xi.beta_plus],
            "beta_minus": [[b.real, b.imag] for b in xi.beta_minus]}


def xi_from_dict(d: Mapping) -> RecursionParamSet:
    def cplx(v):
        return np.array([complex(a, b) for a, b in v], dtype=complex)

    return RecursionParamSet(cplx(d["beta_plus"]), cplx(d["beta_minus"]), origin=d.get("origin", "user"))


def xi_from_csv(path) -> RecursionParamSet:
    rows = sorted(read_csv(path), key=lambda r: int(r["j"]))
    bp = [complex(float(r["re_beta_plus"]), float(r["im_beta_plus"])) for r in rows]
    bm = [complex(float(r["re_beta_minus"]), float(r["im_beta_minus"])) for r in rows]
    origin = rows[0]["origin"] if rows else "user"
    return RecursionParamSet(np.array(bp), np.array(bm), origin=origin)
