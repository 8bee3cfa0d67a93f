"""Exact one-way projection and its OWNS-P / OWNS-R approximations.

Per-mode gains ``F_k = prod_j (alpha_k - beta_plus_j) / (alpha_k - beta_minus_j)``
are evaluated in log-magnitude form, so long products neither overflow nor
underflow before they are combined.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import (
    DegenerateLeadingCoefficient,
    IllConditioned,
    PoleAtEigenvalue,
    PoleCollision,
    SolveFailure,
)
from .spectral import Spectrum

COND_MAX = 1e12
POLE_TOL = 1e-12
ORIGINS = ("greedy", "heuristic", "minimal_P", "minimal_R", "user", "tracked")


@dataclass(frozen=True)
class RecursionParamSet:
    """Ordered recursion parameter pairs ``(beta_plus[j], beta_minus[j])``."""

    beta_plus: np.ndarray
    beta_minus: np.ndarray
    origin: str = "user"
    ordering: Optional[tuple] = None

    def __post_init__(self):
        bp = np.atleast_1d(np.asarray(self.beta_plus, dtype=complex)).copy()
        bm = np.atleast_1d(np.asarray(self.beta_minus, dtype=complex)).copy()
        if bp.shape != bm.shape or bp.ndim != 1:
            raise ValueError("beta_plus and beta_minus must be 1-D and equally long")
        if self.origin not in ORIGINS:
            raise ValueError(f"origin must be one of {ORIGINS}")
        bp.setflags(write=False)
        bm.setflags(write=False)
        object.__setattr__(self, "beta_plus", bp)
        object.__setattr__(self, "beta_minus", bm)

    @property
    def n_beta(self) -> int:
        return len(self.beta_plus)

    def head(self, k) -> "RecursionParamSet":
        """First ``k`` pairs (nested subsets of a greedy sequence)."""
        return RecursionParamSet(self.beta_plus[:k], self.beta_minus[:k], self.origin)

    def check_poles(self, spec: Spectrum, tol=POLE_TOL):
        """Raise :class:`PoleCollision` if a shift sits on an opposing-family eigenvalue."""
        scale = max(1.0, float(np.abs(spec.alphas).max()))
        for betas, alphas in ((self.beta_minus, spec.alpha_plus), (self.beta_plus, spec.alpha_minus)):
            if len(alphas) == 0 or len(betas) == 0:
                continue
            d = np.abs(betas[:, None] - alphas[None, :])
            hit = np.argwhere(d <= tol * scale)
            if hit.size:
                j, k = hit[0]
                raise PoleCollision(complex(betas[j]), complex(alphas[k]))


@dataclass(frozen=True)
class LogGain:
    """``F_k`` stored as log-magnitude, phase, and exact zero/infinity flags."""

    log_abs: np.ndarray
    phase: np.ndarray
    zero: np.ndarray
    inf: np.ndarray

    def value(self) -> np.ndarray:
        with np.errstate(over="ignore", under="ignore"):
            F = np.exp(self.log_abs + 1j * self.phase)
        F[self.zero] = 0.0
        F[self.inf] = np.inf
        return F

    def inverse(self) -> np.ndarray:
        with np.errstate(over="ignore", under="ignore"):
            G = np.exp(-self.log_abs - 1j * self.phase)
        G[self.zero] = np.inf
        G[self.inf] = 0.0
        return G

    def abs_log10(self) -> np.ndarray:
        out = self.log_abs / np.log(10.0)
        out = np.where(self.zero, -np.inf, out)
        return np.where(self.inf, np.inf, out)


def log_gain(alphas, xi: RecursionParamSet, tol=POLE_TOL) -> LogGain:
    """``F_k`` for every alpha; pairs with ``beta_plus[j] == beta_minus[j]`` contribute 1."""
    alphas = np.atleast_1d(np.asarray(alphas, dtype=complex))
    keep = xi.beta_plus != xi.beta_minus
    bp = xi.beta_plus[keep]
    bm = xi.beta_minus[keep]
    scale = max(1.0, float(np.abs(alphas).max()) if alphas.size else 1.0)
    num = alphas[:, None] - bp[None, :]
    den = alphas[:, None] - bm[None, :]
    num_zero = np.abs(num) <= tol * scale
    den_zero = np.abs(den) <= tol * scale
    with np.errstate(divide="ignore"):
        la = (np.where(num_zero, 0.0, np.log(np.abs(num))).sum(axis=1)
              - np.where(den_zero, 0.0, np.log(np.abs(den))).sum(axis=1))
    ph = np.where(num_zero, 0.0, np.angle(num)).sum(axis=1) - np.where(den_zero, 0.0, np.angle(den)).sum(axis=1)
    nz = num_zero.sum(axis=1)
    dz = den_zero.sum(axis=1)
    both = (nz > 0) & (dz > 0)
    if np.any(both):
        k = int(np.flatnonzero(both)[0])
        raise PoleCollision(complex(alphas[k]), complex(alphas[k]))
    return LogGain(log_abs=la, phase=ph, zero=nz > 0, inf=dz > 0)


def exact_projection(spec: Spectrum) -> np.ndarray:
    """``P = V E V^-1`` with ``E`` selecting the downstream columns."""
    if not np.isfinite(spec.cond_V) or spec.cond_V > COND_MAX:
        raise IllConditioned("eigenvector matrix V", spec.cond_V)
    p = spec.n_plus
    return spec.V[:, :p] @ spec.V_inv[:p, :]


def _row_blocks(spec: Spectrum):
    """Row index sets of the characteristic + and - rows of ``V``."""
    op = spec.operator
    if op is not None and getattr(op, "signs", None) is not None and op.n_plus == spec.n_plus:
        return op.plus_rows, op.minus_rows
    # bare matrices: leading rows are the + family
    return np.arange(spec.n_plus), np.arange(spec.n_plus, spec.n)


@dataclass(frozen=True)
class FilterOWNSP:
    """Matrix realization ``P_N = V R E R^-1 V^-1`` of the OWNS-P filter."""

    F_diag: np.ndarray
    R: np.ndarray
    P_mat: np.ndarray
    E_mask: np.ndarray
    gain: LogGain = field(repr=False)
    coupling: tuple = field(repr=False, default=())


def ownsp_matrix(spec: Spectrum, xi: RecursionParamSet) -> FilterOWNSP:
    xi.check_poles(spec)
    n, p = spec.n, spec.n_plus
    gain = log_gain(spec.alphas, xi)
    rp, rm = _row_blocks(spec)
    V = spec.V
    Vpp, Vpm = V[np.ix_(rp, np.arange(p))], V[np.ix_(rp, np.arange(p, n))]
    Vmp, Vmm = V[np.ix_(rm, np.arange(p))], V[np.ix_(rm, np.arange(p, n))]
    X = np.linalg.solve(Vpp, Vpm) if p and n - p else np.zeros((p, n - p))
    Y = np.linalg.solve(Vmm, Vmp) if p and n - p else np.zeros((n - p, p))

    # F_pp X F_mm^-1 and F_mm^-1 Y F_pp with magnitudes combined in log space
    lp = gain.log_abs[:p] + 1j * gain.phase[:p]
    lm = gain.log_abs[p:] + 1j * gain.phase[p:]
    zp, ip = gain.zero[:p], gain.inf[:p]
    zm, im = gain.zero[p:], gain.inf[p:]
    with np.errstate(over="ignore", under="ignore", invalid="ignore"):
        W1 = X * np.exp(lp[:, None] - lm[None, :])
        W2 = Y * np.exp(lp[None, :] - lm[:, None])
    W1[zp, :] = 0.0
    W1[:, im] = 0.0
    W2[im, :] = 0.0
    W2[:, zp] = 0.0
    if not (np.all(np.isfinite(W1)) and np.all(np.isfinite(W2))):
        raise IllConditioned("OWNS-P coupling F V^-1 V F^-1", np.inf)
    K = np.eye(n, dtype=complex)
    K[:p, p:] = W1
    K[p:, :p] = W2
    cK = np.linalg.cond(K)
    if not np.isfinite(cK) or cK > COND_MAX:
        raise IllConditioned("R_N inverse", cK)
    R = np.linalg.inv(K)
    E = np.zeros(n)
    E[:p] = 1.0
    # V R E R^-1 V^-1 with R^-1 = K
    P = (V @ R[:, :p]) @ (K[:p, :] @ spec.V_inv)
    return FilterOWNSP(F_diag=gain.value(), R=R, P_mat=P, E_mask=E, gain=gain, coupling=(X, Y))


class OWNSPFilter:
    """Applies the OWNS-P recursion without forming any projection matrix.

    The auxiliary variables ``phi^-Nb .. phi^Nb`` are solved for together as
    one sparse block system whose factorization is cached.
    """

    def __init__(self, M, xi: RecursionParamSet, plus_rows=None, minus_rows=None):
        op = M
        M = np.asarray(getattr(op, "M", op), dtype=complex)
        if plus_rows is None:
            plus_rows, minus_rows = op.plus_rows, op.minus_rows
        self.n = n = M.shape[0]
        self.xi = xi
        self.M = M
        nb = xi.n_beta
        nblk = 2 * nb + 1
        I = sp.identity(n, format="csr", dtype=complex)
        Ms = sp.csr_matrix(M)

        def blk(j):  # column block of phi^j
            return j + nb

        rows = []
        # boundary rows: plus rows of phi^-Nb, minus rows of phi^Nb
        Sel = sp.lil_matrix((n, nblk * n), dtype=complex)
        for r in plus_rows:
            Sel[r, blk(-nb) * n + r] = 1.0
        for r in minus_rows:
            Sel[r, blk(nb) * n + r] = 1.0
        rows.append(Sel.tocsr())
        bp, bm = xi.beta_plus, xi.beta_minus

        def pair(j_a, A_, j_b, B_):
            row = [None] * nblk
            row[blk(j_a)] = A_
            row[blk(j_b)] = -B_
            for k in range(nblk):
                if row[k] is None:
                    row[k] = sp.csr_matrix((n, n), dtype=complex)
            return sp.hstack(row, format="csr")

        for j in range(1, nb):
            rows.append(pair(-j, Ms - 1j * bm[j] * I, -j - 1, Ms - 1j * bp[j] * I))
        rows.append(pair(0, Ms - 1j * bm[0] * I, -1, Ms - 1j * bp[0] * I))
        self._mid = (M - 1j * bm[0] * np.eye(n))
        for j in range(nb):
            rows.append(pair(j, Ms - 1j * bp[j] * I, j + 1, Ms - 1j * bm[j] * I))
        A = sp.vstack(rows, format="csc")
        self._mid_row = n + (nb - 1) * n
        self.shape = A.shape
        try:
            self._lu = spla.splu(A)
        except RuntimeError as exc:
            raise SolveFailure(complex(bm[0]), np.inf) from exc
        self.n_solves = 0

    def apply(self, phi):
        phi = np.asarray(phi, dtype=complex)
        vec = phi.ndim == 1
        Phi = phi[:, None] if vec else phi
        rhs = np.zeros((self.shape[0], Phi.shape[1]), dtype=complex)
        rhs[self._mid_row:self._mid_row + self.n] = self._mid @ Phi
        sol = self._lu.solve(rhs)
        self.n_solves += Phi.shape[1]
        nb = self.xi.n_beta
        out = sol[nb * self.n:(nb + 1) * self.n]
        if not np.all(np.isfinite(out)):
            raise SolveFailure(complex(self.xi.beta_minus[0]), np.inf)
        return out[:, 0] if vec else out

    __call__ = apply


def ownsp_apply_filter(M, xi: RecursionParamSet, phi):
    """One-shot OWNS-P filter action ``phi -> phi^0``."""
    return OWNSPFilter(M, xi).apply(phi)


def ownsr_eigvals(spec_or_alphas, xi: RecursionParamSet, c=1.0) -> np.ndarray:
    """Approximate eigenvalues ``E_k = 1 / (1 + c F_k)`` of the OWNS-R projection."""
    alphas = getattr(spec_or_alphas, "alphas", spec_or_alphas)
    gain = log_gain(alphas, xi)
    return _e_from_gain(gain, c, alphas)


def _e_from_gain(gain: LogGain, c, alphas=None):
    c = complex(c)
    small = gain.log_abs <= 0
    with np.errstate(over="ignore", under="ignore", invalid="ignore", divide="ignore"):
        F = np.exp(np.where(small, gain.log_abs, 0.0) + 1j * gain.phase)
        G = np.exp(np.where(small, 0.0, -gain.log_abs) - 1j * gain.phase)
        d1 = 1 + c * F
        d2 = G + c
        E = np.where(small, 1.0 / d1, G / d2)
    E = np.where(gain.zero, 1.0 + 0j, E)
    E = np.where(gain.inf, 0.0 + 0j if c != 0 else 1.0 + 0j, E)
    den = np.where(small, np.abs(d1), np.abs(d2) / np.maximum(np.abs(G), 1.0))
    bad = (~gain.zero) & (~gain.inf) & (den <= POLE_TOL)
    if np.any(bad):
        k = int(np.flatnonzero(bad)[0])
        raise PoleAtEigenvalue(f"1 + c F vanishes at mode {k}"
                               + (f" (alpha={complex(alphas[k])!r})" if alphas is not None else ""))
    return E


@dataclass(frozen=True)
class BetaStar:
    roots: np.ndarray
    residual: float
    c: complex = 1.0


def beta_star_polynomial(xi: RecursionParamSet, c=1.0):
    """Monic coefficients of ``(prod(a - bm) + c prod(a - bp)) / (1 + c)``."""
    c = complex(c)
    lead = 1.0 + c
    if abs(lead) <= 1e-14:
        raise DegenerateLeadingCoefficient("1 + c vanishes; the beta* polynomial loses its degree")
    return (np.poly(xi.beta_minus) + c * np.poly(xi.beta_plus)) / lead


def ownsr_beta_star(xi: RecursionParamSet, c=1.0, n_samples=100, seed=0) -> BetaStar:
    """Shifts ``beta*`` letting OWNS-R be applied with one solve per level."""
    if xi.n_beta < 1:
        raise ValueError("at least one recursion pair is required")
    coeffs = beta_star_polynomial(xi, c)
    roots = np.roots(coeffs) if xi.n_beta > 1 else np.array([-coeffs[1]])
    roots = roots[np.lexsort((np.angle(roots), np.abs(roots)))]
    from .diagnostics import polynomial_residual_error

    res = polynomial_residual_error(xi, roots, n_samples=n_samples, seed=seed, c=c)
    return BetaStar(roots=roots, residual=res, c=complex(c))


class OWNSRFilter:
    """Practical OWNS-R action ``phi^0 = phi/(1+c)``, ``(M - i b*_j) phi^{j+1} = (M - i bm_j) phi^j``.

    One dense LU per ``beta*`` is cached for the lifetime of the object.
    """

    def __init__(self, M, xi: RecursionParamSet, beta_star: Optional[BetaStar] = None, c=1.0):
        self.M = np.asarray(getattr(M, "M", M), dtype=complex)
        self.xi = xi
        self.c = complex(c)
        self.beta_star = ownsr_beta_star(xi, c) if beta_star is None else beta_star
        roots = np.asarray(getattr(self.beta_star, "roots", self.beta_star), dtype=complex)
        if len(roots) != xi.n_beta:
            raise ValueError("beta_star must have one root per recursion pair")
        n = self.M.shape[0]
        eye = np.eye(n)
        self._lus = []
        for b in roots:
            A = self.M - 1j * b * eye
            lu = sla.lu_factor(A, check_finite=False)
            if np.any(np.diag(lu[0]) == 0):
                raise SolveFailure(complex(b), np.inf)
            self._lus.append(lu)
        self._rhs = [self.M - 1j * b * eye for b in xi.beta_minus]
        self.n_solves = 0

    def apply(self, phi):
        x = np.asarray(phi, dtype=complex) / (1.0 + self.c)
        for lu, B, b in zip(self._lus, self._rhs, self.xi.beta_minus):
            x = sla.lu_solve(lu, B @ x, check_finite=False)
            self.n_solves += 1
        if not np.all(np.isfinite(x)):
            raise SolveFailure(complex(self.xi.beta_minus[0]), np.inf)
        return x

    __call__ = apply


def ownsr_apply(M, xi: RecursionParamSet, beta_star=None, phi=None, c=1.0):
    return OWNSRFilter(M, xi, beta_star, c).apply(phi)


@dataclass(frozen=True)
class FilterOWNSR:
    c: complex
    E_approx: np.ndarray
    beta_star: BetaStar
    P_mat: np.ndarray


def ownsr_matrix(spec: Spectrum, xi: RecursionParamSet, c=1.0, with_beta_star=True) -> FilterOWNSR:
    """``P^(R) = V diag(E) V^-1`` with the approximate eigenvalues of OWNS-R."""
    xi.check_poles(spec)
    E = ownsr_eigvals(spec, xi, c)
    P = (spec.V * E[None, :]) @ spec.V_inv
    bs = ownsr_beta_star(xi, c) if with_beta_star and xi.n_beta else None
    return FilterOWNSR(c=complex(c), E_approx=E, beta_star=bs, P_mat=P)


def commutator_norm(P_like, M) -> float:
    """``||P M - M P||_2``."""
    P = np.asarray(P_like)
    M = np.asarray(getattr(M, "M", M))
    if P.shape != M.shape:
        raise ValueError("P and M must have matching shapes")
    return float(np.linalg.norm(P @ M - M @ P, 2))
