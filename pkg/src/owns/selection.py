"""Recursion-parameter objectives and selectors (greedy, heuristic, minimal sets)."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import BadConfig, DegenerateSpectrum, EmptySpectrum, ExcludedAll, PoleCollision
from .filters import POLE_TOL, RecursionParamSet, log_gain
from .spectral import Spectrum

OBJECTIVES = ("ownsp", "ownsr")


@dataclass(frozen=True)
class ObjectiveReport:
    """Per-mode filter gains and the two aggregate objectives.

    ``J_plus_per_mode[m] = |F_m|`` over downstream modes and
    ``J_minus_per_mode[n] = 1/|F_n|`` over upstream modes.
    """

    J_plus_per_mode: np.ndarray
    J_minus_per_mode: np.ndarray
    J_ownsp: float
    J_ownsr: float
    argmax_plus: int
    argmax_minus: int

    @property
    def max_plus(self) -> float:
        return float(self.J_plus_per_mode.max()) if self.J_plus_per_mode.size else 0.0

    @property
    def max_minus(self) -> float:
        return float(self.J_minus_per_mode.max()) if self.J_minus_per_mode.size else 0.0

    def value(self, objective="ownsp") -> float:
        return self.J_ownsp if objective == "ownsp" else self.J_ownsr


def _exclusion_mask(alphas, exclude):
    if exclude is None:
        return np.zeros(len(alphas), dtype=bool)
    return np.array([bool(exclude(a)) for a in alphas], dtype=bool)


def _log_max(logs, zero):
    """(log of max, argmax) with exact zeros honoured; ties go to the lowest index."""
    if logs.size == 0:
        return -np.inf, -1
    vals = np.where(zero, -np.inf, logs)
    k = int(np.argmax(vals))
    return float(vals[k]), k


def objectives(spec: Spectrum, xi: RecursionParamSet, exclude: Optional[Callable] = None
               ) -> ObjectiveReport:
    """Evaluate the objectives; excluded modes keep their per-mode values but are
    left out of the maxima."""
    xi.check_poles(spec)
    g = log_gain(spec.alphas, xi)
    p = spec.n_plus
    skip = _exclusion_mask(spec.alphas, exclude)
    lp, lm = g.log_abs[:p], -g.log_abs[p:]
    zp, zm = g.zero[:p], g.inf[p:]
    if np.any(g.inf[:p]) or np.any(g.zero[p:]):
        raise PoleCollision(None, None)
    with np.errstate(over="ignore", under="ignore"):
        Jp = np.where(zp, 0.0, np.exp(lp))
        Jm = np.where(zm, 0.0, np.exp(lm))
    mp, kp = _log_max(np.where(skip[:p], -np.inf, lp), zp | skip[:p])
    mm, km = _log_max(np.where(skip[p:], -np.inf, lm), zm | skip[p:])
    # an empty family contributes a zero norm
    with np.errstate(over="ignore", under="ignore"):
        J_p = float(np.exp(mp + mm)) if p and spec.n - p else 0.0
        J_r = float(max(np.exp(mp), np.exp(mm)))
    return ObjectiveReport(J_plus_per_mode=Jp, J_minus_per_mode=Jm, J_ownsp=J_p, J_ownsr=J_r,
                           argmax_plus=kp, argmax_minus=km)


def order_params(xi: RecursionParamSet) -> RecursionParamSet:
    """Sort each family by modulus (stable), which keeps ``|beta_plus - beta_minus|`` small."""
    ip = np.argsort(np.abs(xi.beta_plus), kind="stable")
    im = np.argsort(np.abs(xi.beta_minus), kind="stable")
    return RecursionParamSet(xi.beta_plus[ip], xi.beta_minus[im], origin=xi.origin,
                             ordering=(tuple(int(i) for i in ip), tuple(int(i) for i in im)))


def nested_head(xi: RecursionParamSet, k: int) -> RecursionParamSet:
    """First ``k`` pairs in selection order, re-ordered by modulus.

    Greedy chains add one pair per step, so their prefixes are the nested sets of a
    single run; ``order_params`` records the permutation needed to recover them.
    """
    if not 1 <= k <= xi.n_beta:
        raise ValueError("k must lie in 1..n_beta")
    bp, bm = xi.beta_plus, xi.beta_minus
    if xi.ordering is not None:
        ip, im = (np.asarray(o) for o in xi.ordering)
        bp, bm = np.empty_like(bp), np.empty_like(bm)
        bp[ip] = xi.beta_plus
        bm[im] = xi.beta_minus
    return order_params(RecursionParamSet(bp[:k], bm[:k], origin=xi.origin))


def fallback_minus(beta_plus, alphas):
    """Stand-in upstream shift when there are no upstream modes: the conjugate of
    ``beta_plus`` pushed below every eigenvalue."""
    r = 2.0 * float(np.abs(alphas).max()) + 1.0
    return np.conj(beta_plus) - 1j * r


def fallback_plus(beta_minus, alphas):
    r = 2.0 * float(np.abs(alphas).max()) + 1.0
    return np.conj(beta_minus) + 1j * r


class _Chain:
    """Incremental log-gains for one greedy chain."""

    def __init__(self, ap, am, tol):
        self.ap, self.am, self.tol = ap, am, tol
        self.lp = np.zeros(len(ap))
        self.lm = np.zeros(len(am))
        self.zp = np.zeros(len(ap), dtype=bool)
        self.zm = np.zeros(len(am), dtype=bool)

    def add(self, bp, bm):
        if bp == bm:
            return
        for a, l, z, num, den in ((self.ap, self.lp, self.zp, bp, bm), (self.am, self.lm, self.zm, bm, bp)):
            if a.size == 0:
                continue
            dn = np.abs(a - num)
            dd = np.abs(a - den)
            hit_n = dn <= self.tol
            if np.any(dd <= self.tol):
                raise PoleCollision(complex(den), complex(a[np.argmax(dd <= self.tol)]))
            z |= hit_n
            with np.errstate(divide="ignore"):
                l += np.where(hit_n, 0.0, np.log(np.maximum(dn, 1e-300))) - np.log(dd)


def _greedy_chain(ap, am, allowed_p, allowed_m, n_beta, rng, tol, alphas_all):
    ch = _Chain(ap, am, tol)
    bps, bms = [], []
    has_p, has_m = len(allowed_p) > 0, len(allowed_m) > 0
    for it in range(n_beta):
        if it == 0:
            ip = allowed_p[rng.integers(len(allowed_p))] if has_p else None
            im = allowed_m[rng.integers(len(allowed_m))] if has_m else None
        else:
            ip = im = None
            if has_p:
                vals = np.where(ch.zp[allowed_p], -np.inf, ch.lp[allowed_p])
                ip = allowed_p[int(np.argmax(vals))]
            if has_m:
                vals = np.where(ch.zm[allowed_m], -np.inf, ch.lm[allowed_m])
                im = allowed_m[int(np.argmax(vals))]
        bp = ap[ip] if ip is not None else None
        bm = am[im] if im is not None else None
        if bp is None:
            bp = fallback_plus(bm, alphas_all)
        if bm is None:
            bm = fallback_minus(bp, alphas_all)
        ch.add(bp, bm)
        bps.append(bp)
        bms.append(bm)
    return np.array(bps), np.array(bms)


def greedy_select(spec: Spectrum, n_beta: int, n_starts: int = 8, seed: int = 0,
                  exclude: Optional[Callable] = None, objective: str = "ownsp",
                  n_jobs: int = 1, return_all=False) -> RecursionParamSet:
    """Greedy selection with multiple random starts; the lowest objective wins.

    Chain ``i`` draws its starting pair from ``numpy.random.default_rng([seed, i])``
    so that pools for increasing ``n_starts`` are nested.
    """
    if n_beta < 1:
        raise ValueError("n_beta must be at least 1")
    if n_starts < 1:
        raise ValueError("n_starts must be at least 1")
    if objective not in OBJECTIVES:
        raise ValueError(f"objective must be one of {OBJECTIVES}")
    if spec.n == 0:
        raise EmptySpectrum("spectrum has no modes")
    p = spec.n_plus
    ap, am = spec.alpha_plus, spec.alpha_minus
    skip = _exclusion_mask(spec.alphas, exclude)
    allowed_p = np.flatnonzero(~skip[:p])
    allowed_m = np.flatnonzero(~skip[p:])
    if (p and allowed_p.size == 0) or (spec.n - p and allowed_m.size == 0):
        raise ExcludedAll("the exclusion predicate removes an entire family")
    if allowed_p.size == 0 and allowed_m.size == 0:
        raise EmptySpectrum("no selectable modes")
    tol = POLE_TOL * max(1.0, float(np.abs(spec.alphas).max()))

    def run(i):
        rng = np.random.default_rng([seed, i])
        bp, bm = _greedy_chain(ap, am, allowed_p, allowed_m, n_beta, rng, tol, spec.alphas)
        xi = RecursionParamSet(bp, bm, origin="greedy")
        return xi, objectives(spec, xi, exclude).value(objective)

    if n_jobs > 1:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            results = list(pool.map(run, range(n_starts)))
    else:
        results = [run(i) for i in range(n_starts)]
    best = 0
    for i, (_, J) in enumerate(results):
        if J < results[best][1]:
            best = i
    chosen = order_params(results[best][0])
    if return_all:
        return chosen, results
    return chosen


def greedy_sequence(spec: Spectrum, n_beta_max: int, seed: int = 0, n_starts: int = 8,
                    exclude=None, objective="ownsp"):
    """Greedy sets for ``n_beta = 1..n_beta_max`` (each selected independently)."""
    return {k: greedy_select(spec, k, n_starts, seed, exclude, objective)
            for k in range(1, n_beta_max + 1)}


# ---------------------------------------------------------------------------
# heuristic baseline
# ---------------------------------------------------------------------------

def parse_complex(v, name="value"):
    """Accept a number, ``[re, im]``, ``{"re": .., "im": ..}`` or a Python complex string."""
    try:
        if isinstance(v, (int, float, complex)) and not isinstance(v, bool):
            return complex(v)
        if isinstance(v, (list, tuple)) and len(v) == 2:
            return complex(float(v[0]), float(v[1]))
        if isinstance(v, dict) and set(v) <= {"re", "im"}:
            return complex(float(v.get("re", 0.0)), float(v.get("im", 0.0)))
        if isinstance(v, str):
            return complex(v.replace(" ", ""))
    except (TypeError, ValueError):
        pass
    raise BadConfig(f"{name}: cannot interpret {v!r} as a complex number")


def heuristic_select(config: dict, n_beta: Optional[int] = None) -> RecursionParamSet:
    """Place parameters geometrically along two rays; a baseline not fitted to any spectrum.

    ``beta_plus[j] = origin_plus + (anchor_plus - origin_plus) * ratio**j`` and likewise
    for ``beta_minus``.  Without ``anchor_minus`` the minus ray is a mirror image of the
    plus ray: through ``origin_minus`` when ``mirror="point"`` (the default), or in the
    real axis when ``mirror="conjugate"``.  Either way each pair has equal distance
    from its origin.  ``span`` may replace ``ratio``: the last parameter then sits at
    ``span`` times the anchor distance.
    """
    if not isinstance(config, dict):
        raise BadConfig("heuristic config must be a mapping")
    known = {"n_beta", "anchor_plus", "anchor_minus", "origin_plus", "origin_minus", "ratio", "span",
             "mirror"}
    extra = set(config) - known
    if extra:
        raise BadConfig(f"unknown heuristic keys: {sorted(extra)}")
    nb = n_beta if n_beta is not None else config.get("n_beta")
    if not isinstance(nb, (int, np.integer)) or isinstance(nb, bool) or nb < 1:
        raise BadConfig("n_beta must be a positive integer")
    if "anchor_plus" not in config:
        raise BadConfig("anchor_plus is required")
    op = parse_complex(config.get("origin_plus", 0.0), "origin_plus")
    om = parse_complex(config.get("origin_minus", op), "origin_minus")
    ap = parse_complex(config["anchor_plus"], "anchor_plus")
    mirror = config.get("mirror", "point")
    if mirror not in ("point", "conjugate"):
        raise BadConfig("mirror must be 'point' or 'conjugate'")
    if "anchor_minus" in config:
        am = parse_complex(config["anchor_minus"], "anchor_minus")
    elif mirror == "conjugate":
        om = parse_complex(config.get("origin_minus", np.conj(op)), "origin_minus")
        am = om + np.conj(ap - op)
    else:
        am = om - (ap - op)
    if "ratio" in config and "span" in config:
        raise BadConfig("give ratio or span, not both")
    if "span" in config:
        span = float(config["span"])
        if span <= 0:
            raise BadConfig("span must be positive")
        ratio = span ** (1.0 / (nb - 1)) if nb > 1 else 1.0
    else:
        ratio = float(config.get("ratio", 1.0))
        if ratio <= 0:
            raise BadConfig("ratio must be positive")
    if ap == op or am == om:
        raise BadConfig("anchors must differ from their origins")
    g = ratio ** np.arange(nb)
    return RecursionParamSet(op + (ap - op) * g, om + (am - om) * g, origin="heuristic")


def euler_heuristic_config(n_beta, omega, u, a=1.0, h=None, d0=None):
    """Stand-in heuristic for linearized Euler built from acoustic-branch estimates.

    For uniform flow the acoustic branches leave ``omega u / (a^2 - u^2)`` vertically,
    downstream upwards and upstream downwards.  ``beta_plus`` climbs the upper branch
    geometrically from ``d0`` to the largest decay rate a grid of spacing ``h`` can
    represent, and ``beta_minus`` is its complex conjugate.  Convective modes on the
    real axis are not targeted, which is the weakness this baseline exhibits.
    """
    if abs(u) >= a:
        raise BadConfig("the acoustic-branch heuristic needs subsonic flow")
    beta = np.sqrt(a * a - u * u)
    centre = omega * u / beta ** 2
    d0 = omega / beta if d0 is None else d0
    d_max = a / (h * beta) if h is not None else 10.0 * d0
    span = max(d_max / d0, 1.0)
    return {"n_beta": int(n_beta), "origin_plus": [centre, 0.0], "anchor_plus": [centre, d0],
            "span": span, "mirror": "conjugate"}


# ---------------------------------------------------------------------------
# minimal exact sets
# ---------------------------------------------------------------------------

def _check_distinct(spec: Spectrum, tol=POLE_TOL):
    ap, am = spec.alpha_plus, spec.alpha_minus
    if ap.size == 0 or am.size == 0:
        return
    scale = max(1.0, float(np.abs(spec.alphas).max()))
    d = np.abs(ap[:, None] - am[None, :])
    if np.any(d <= tol * scale):
        i, j = np.argwhere(d <= tol * scale)[0]
        raise DegenerateSpectrum(f"downstream alpha {ap[i]!r} equals upstream alpha {am[j]!r}")


def _fill(own, count):
    """``count`` entries cycling through ``own``."""
    if own.size == 0:
        raise DegenerateSpectrum("cannot fill parameters from an empty family")
    return own[np.arange(count) % own.size]


def minimal_set_ownsp(spec: Spectrum) -> RecursionParamSet:
    """Exact OWNS-P set with ``n_beta = min(N+, N-)``.

    The smaller family's eigenvalues are all used on its own side; the other side
    takes eigenvalues of the larger family, which never coincide with the smaller
    family's.
    """
    _check_distinct(spec)
    ap, am = spec.alpha_plus, spec.alpha_minus
    if ap.size == 0 or am.size == 0:
        raise DegenerateSpectrum("minimal sets need both families")
    if ap.size <= am.size:
        bp, bm = ap.copy(), am[: ap.size].copy()
    else:
        bp, bm = ap[: am.size].copy(), am.copy()
    return RecursionParamSet(bp, bm, origin="minimal_P")


def minimal_set_ownsr(spec: Spectrum) -> RecursionParamSet:
    """Exact OWNS-R set with ``n_beta = max(N+, N-)``; the shorter family repeats its
    own eigenvalues, which are distinct from every opposing eigenvalue."""
    _check_distinct(spec)
    ap, am = spec.alpha_plus, spec.alpha_minus
    if ap.size == 0 or am.size == 0:
        raise DegenerateSpectrum("minimal sets need both families")
    nb = max(ap.size, am.size)
    return RecursionParamSet(_fill(ap, nb), _fill(am, nb), origin="minimal_R")
