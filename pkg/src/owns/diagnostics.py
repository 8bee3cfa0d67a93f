"""Quantitative checks: projection errors, error bounds, filtered-spectrum stability,
and the rounding error of the OWNS-R shifts."""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .filters import (
    OWNSPFilter,
    OWNSRFilter,
    RecursionParamSet,
    exact_projection,
    log_gain,
    ownsp_matrix,
    ownsr_beta_star,
    ownsr_eigvals,
    _row_blocks,
)
from .spectral import DOWNSTREAM, UPSTREAM, Spectrum, eig_alpha, follow_eigenvalues

EPS_HAT = 1e-2
METHODS = ("ownsp", "ownsr", "exact")


def _as_operator(P):
    if callable(P) and not isinstance(P, np.ndarray):
        return P
    P = np.asarray(P)
    return lambda x: P @ x


def random_complex(rng, shape):
    """Entries with real and imaginary parts uniform in [-1, 1]."""
    return rng.uniform(-1, 1, shape) + 1j * rng.uniform(-1, 1, shape)


def projection_error(P_approx, spec: Spectrum, n_trials: int = 20, seed: int = 0) -> float:
    """Worst relative error ``||P (V+ psi+ + V- psi-) - V+ psi+|| / ||V+ psi+||`` over random psi.

    ``P_approx`` is a matrix or a callable applying the approximate projection.
    """
    if n_trials < 1:
        raise ValueError("n_trials must be at least 1")
    apply = _as_operator(P_approx)
    rng = np.random.default_rng(seed)
    p = spec.n_plus
    Vp, Vm = spec.V[:, :p], spec.V[:, p:]
    psi_p = random_complex(rng, (p, n_trials))
    psi_m = random_complex(rng, (spec.n - p, n_trials))
    target = Vp @ psi_p
    out = apply(target + Vm @ psi_m)
    err = np.linalg.norm(out - target, axis=0) / np.linalg.norm(target, axis=0)
    return float(err.max())


def mode_error(P_approx, mode_vector) -> float:
    """``||P phi - phi|| / ||phi||`` for a downstream mode ``phi``."""
    phi = np.asarray(mode_vector, dtype=complex)
    return float(np.linalg.norm(_as_operator(P_approx)(phi) - phi) / np.linalg.norm(phi))


def designated_mode(spec: Spectrum) -> int:
    """Index of the most unstable downstream mode (largest ``-Im(alpha)``)."""
    if spec.n_plus == 0:
        raise ValueError("no downstream modes")
    return int(np.argmin(spec.alpha_plus.imag))


@dataclass(frozen=True)
class BoundReport:
    bound: float
    precondition_ok: bool
    F_pp_norm: float
    F_mm_inv_norm: float
    epsilon: float
    commutator_bound: Optional[float] = None


def _gain_norms(spec, xi):
    g = log_gain(spec.alphas, xi)
    p = spec.n_plus
    with np.errstate(over="ignore", under="ignore"):
        fp = np.where(g.zero[:p], 0.0, np.exp(g.log_abs[:p]))
        fm = np.where(g.inf[p:], 0.0, np.exp(-g.log_abs[p:]))
    return (float(fp.max()) if fp.size else 0.0), (float(fm.max()) if fm.size else 0.0)


def bound_values(spec: Spectrum, xi: RecursionParamSet, method: str, c=1.0,
                 eps_hat: float = EPS_HAT) -> BoundReport:
    """Right-hand side of the first-order error bound and whether its smallness
    precondition holds (2-norms throughout)."""
    xi.check_poles(spec)
    Fp, Fm = _gain_norms(spec, xi)
    nV = np.linalg.norm(spec.V, 2)
    nVi = np.linalg.norm(spec.V_inv, 2)
    if method == "ownsp":
        rp, rm = _row_blocks(spec)
        p, n = spec.n_plus, spec.n
        if p == 0 or p == n:
            return BoundReport(0.0, True, Fp, Fm, eps_hat, 0.0)
        V = spec.V
        a = np.linalg.norm(np.linalg.solve(V[np.ix_(rp, range(p))], V[np.ix_(rp, range(p, n))]), 2)
        b = np.linalg.norm(np.linalg.solve(V[np.ix_(rm, range(p, n))], V[np.ix_(rm, range(p))]), 2)
        eps = min(eps_hat, 1.0 / np.sqrt(a * b)) if a * b > 0 else eps_hat
        prod = Fp * Fm
        bound = nV * prod * (a + b) * nVi
        comm = 2.0 * bound * np.linalg.norm(spec.M, 2)
        return BoundReport(float(bound), bool(prod < eps), Fp, Fm, float(eps), float(comm))
    if method == "ownsr":
        m = max(abs(c) * Fp, Fm)
        return BoundReport(float(m * nV * nVi), bool(m < eps_hat), Fp, Fm, eps_hat)
    if method == "exact":
        return BoundReport(0.0, True, 0.0, 0.0, eps_hat, 0.0)
    raise ValueError(f"method must be one of {METHODS}")


def polynomial_residual_error(xi: RecursionParamSet, beta_star, n_samples: int = 100, seed: int = 0,
                              c=1.0, scale: float = 1.0) -> float:
    """Worst relative residual of ``(1+c) prod(z - b*) = prod(z - bm) + c prod(z - bp)``.

    Samples ``z = scale * (a + i b)`` with ``a, b`` uniform in [-1, 1]; the
    denominator is ``|prod(z - bm) - prod(z - bp)|``.  ``scale = 1`` gives the
    verbatim metric.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be at least 1")
    roots = np.asarray(getattr(beta_star, "roots", beta_star), dtype=complex)
    rng = np.random.default_rng(seed)
    z = scale * random_complex(rng, n_samples)
    c = complex(c)
    ps = np.prod(z[:, None] - roots[None, :], axis=1)
    pm = np.prod(z[:, None] - xi.beta_minus[None, :], axis=1)
    pp = np.prod(z[:, None] - xi.beta_plus[None, :], axis=1)
    num = np.abs((1 + c) * ps - pm - c * pp)
    den = np.abs(pm - pp)
    with np.errstate(divide="ignore", invalid="ignore"):
        r = np.where(den > 0, num / den, np.where(num > 0, np.inf, 0.0))
    return float(r.max())


def scaled_polynomial_residual_error(xi, beta_star, n_samples=100, seed=0, c=1.0) -> float:
    """Same metric with samples spread over the disc holding all parameters."""
    scale = max(1.0, float(np.abs(np.concatenate([xi.beta_plus, xi.beta_minus])).max()))
    return polynomial_residual_error(xi, beta_star, n_samples, seed, c, scale)


# ---------------------------------------------------------------------------
# stability of the filtered operator
# ---------------------------------------------------------------------------

@dataclass
class FilteredSpectrumReport:
    """Eigenvalues of the filtered operator at ``eta = 0`` and ``eta_large``.

    ``labels`` are Briggs labels of the filtered modes (0 for modes the filter maps
    to zero); ``flagged`` lists upstream-going modes with ``Im(alpha) < 0`` at
    ``eta = 0``, which make a march unstable.
    """

    method: str
    alphas_0: np.ndarray
    alphas_eta: np.ndarray
    labels: np.ndarray
    flagged: np.ndarray
    eta_large: float
    tol: float

    @property
    def n_flagged(self) -> int:
        return int(len(self.flagged))

    @property
    def stable(self) -> bool:
        return self.n_flagged == 0


def _labelled_at(spec: Spectrum, builder, eta, cache):
    """Eigenvectors at ``eta`` with columns aligned to ``spec`` (continued from ``spec``)."""
    if eta == 0:
        return spec.alphas, spec.V
    key = float(eta)
    if key in cache:
        return cache[key]
    base_eta, base = max(((e, v) for e, v in cache.items() if e <= key), default=(0.0, None))
    start = (spec.alphas, spec.V) if base is None else base
    path = follow_eigenvalues(lambda e: np.asarray(builder(spec.s_used + e).M), key,
                              start=start, keep_vectors=True, eta_start=base_eta)
    cache[key] = (path.alphas[-1], path.vectors[-1])
    return cache[key]


def filtered_spectrum_check(spec: Spectrum, xi: Optional[RecursionParamSet], method: str,
                            builder: Optional[Callable] = None, eta_large: Optional[float] = None,
                            c=1.0, tol: Optional[float] = None) -> FilteredSpectrumReport:
    """Briggs check of the filtered operator.

    ``exact`` and ``ownsr`` filters are diagonal in the eigenbasis, so their filtered
    eigenvalues are ``E_k alpha_k`` along the continuation path of ``M``.  For
    ``ownsp`` the eigenvalues of ``P_N(eta) M(eta)`` are followed numerically.
    """
    if builder is None and spec.operator is not None:
        raise ValueError("a builder is required to evaluate M at other growth rates")
    eta_large = spec.eta_used if eta_large is None else float(eta_large)
    scale = float(np.abs(spec.alphas).max())
    tol = 1e-8 * max(1.0, scale) if tol is None else tol
    cache = {}
    a_end, V_end = _labelled_at(spec, builder, eta_large, cache)

    if method in ("exact", "ownsr"):
        if method == "exact":
            E0 = np.where(spec.labels == DOWNSTREAM, 1.0, 0.0)
            E1 = E0
        else:
            E0 = ownsr_eigvals(spec.alphas, xi, c)
            E1 = ownsr_eigvals(a_end, xi, c)
        a0 = E0 * spec.alphas
        a1 = E1 * a_end
        removed = np.abs(E0) == 0
        labels = np.where(removed, 0, np.where(a1.imag > 0, DOWNSTREAM, UPSTREAM))
    elif method == "ownsp":
        def matrix_at(eta):
            alphas, V = _labelled_at(spec, builder, eta, cache)
            M = np.asarray(builder(spec.s_used + eta).M)
            sp_eta = Spectrum.from_labels(M, alphas, V, spec.labels, operator=spec.operator)
            return ownsp_matrix(sp_eta, xi).P_mat @ M

        path = follow_eigenvalues(matrix_at, eta_large, h0=eta_large * 1e-3)
        a0, a1 = path.alphas[0], path.alphas[-1]
        removed = np.abs(a0) <= tol
        labels = np.where(removed & (np.abs(a1) <= tol * max(1.0, eta_large)), 0,
                          np.where(a1.imag > 0, DOWNSTREAM, UPSTREAM))
    else:
        raise ValueError(f"method must be one of {METHODS}")
    flagged = np.flatnonzero((labels == UPSTREAM) & (a0.imag < -tol))
    return FilteredSpectrumReport(method=method, alphas_0=a0, alphas_eta=a1, labels=labels,
                                  flagged=flagged, eta_large=eta_large, tol=tol)


# ---------------------------------------------------------------------------
# error studies
# ---------------------------------------------------------------------------

STUDY_COLUMNS = ("n_beta", "selector", "method", "J", "proj_err", "mode_err", "bound",
                 "precondition_ok", "beta_star_residual", "wall_ms")


@dataclass
class StudyRecord:
    n_beta: int
    selector: str
    method: str
    J: float
    proj_err: float
    mode_err: float
    bound: float
    precondition_ok: bool
    beta_star_residual: float
    wall_ms: float

    def row(self):
        return asdict(self)


@dataclass
class ErrorStudy:
    n_beta_grid: tuple
    method: str
    selector: str
    records: list = field(default_factory=list)


def evaluate_params(spec: Spectrum, xi: RecursionParamSet, method: str, c=1.0,
                    n_trials=20, seed=0, selector="user") -> StudyRecord:
    """One study cell: objective, errors of the practical filter, bound and beta* residual."""
    from .selection import objectives

    t0 = time.perf_counter()
    rep = objectives(spec, xi)
    mode = spec.V[:, designated_mode(spec)]
    if method == "ownsp":
        filt = OWNSPFilter(spec.operator if spec.operator is not None else spec.M, xi,
                           *(() if spec.operator is not None else _row_blocks(spec)))
        J = rep.J_ownsp
        resid = np.nan
    elif method == "ownsr":
        bs = ownsr_beta_star(xi, c)
        filt = OWNSRFilter(spec.M, xi, bs, c)
        J = rep.J_ownsr
        resid = bs.residual
    else:
        raise ValueError("method must be ownsp or ownsr")
    pe = projection_error(filt, spec, n_trials, seed)
    me = mode_error(filt, mode)
    b = bound_values(spec, xi, method, c)
    wall = (time.perf_counter() - t0) * 1e3
    return StudyRecord(xi.n_beta, selector, method, float(J), pe, me, b.bound, b.precondition_ok,
                       float(resid), float(wall))


def run_study(spec: Spectrum, n_beta_grid: Sequence[int], method: str, selector: str,
              seed=0, n_starts=8, heuristic=None, c=1.0, n_trials=20, exclude=None,
              n_jobs=1) -> ErrorStudy:
    """Sweep ``n_beta`` for one (method, selector) cell.

    Grid cells are independent and run on a pool of ``n_jobs`` threads; records
    come back in grid order whatever the scheduling.
    """
    from .selection import greedy_select, heuristic_select, minimal_set_ownsp, minimal_set_ownsr

    grid = tuple(int(k) for k in n_beta_grid)
    if any(b <= a for a, b in zip(grid, grid[1:])):
        raise ValueError("n_beta grid must be strictly increasing")
    study = ErrorStudy(n_beta_grid=grid, method=method, selector=selector)
    if selector == "minimal":
        xi = minimal_set_ownsp(spec) if method == "ownsp" else minimal_set_ownsr(spec)
        study.records.append(evaluate_params(spec, xi, method, c, n_trials, seed, selector))
        return study
    if selector not in ("greedy", "heuristic"):
        raise ValueError(f"unknown selector {selector!r}")

    def cell(nb):
        t0 = time.perf_counter()
        if selector == "greedy":
            xi = greedy_select(spec, nb, n_starts, seed, exclude, objective=method)
        else:
            xi = heuristic_select(heuristic, nb)
        rec = evaluate_params(spec, xi, method, c, n_trials, seed, selector)
        rec.wall_ms = (time.perf_counter() - t0) * 1e3
        return rec

    if n_jobs > 1:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            study.records.extend(pool.map(cell, grid))
    else:
        study.records.extend(cell(nb) for nb in grid)
    return study
