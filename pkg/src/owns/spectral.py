"""Eigenvalues of the marching operator and their Briggs classification.

Eigenvalues are reported as wavenumbers: ``M v = i alpha v``.  A mode is
downstream-going when ``Im(alpha) -> +inf`` as the Laplace growth rate
``eta = Re(s)`` grows, which is decided by following every eigenvalue from ``s0``
to ``s0 + eta_large`` along a continuation path.
"""

from __future__ import annotations

import warnings

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
import scipy.linalg as sla

from .errors import ClassificationAmbiguous, NoConvergence, UnresolvedPairing
from .system import OperatorM

DOWNSTREAM = 1
UPSTREAM = -1
ETA_FACTOR = 1e3
IM_THRESHOLD = 10.0
CLUSTER_TOL = 1e-8
PAIRING_RATIO = 0.5


def normalize_columns(V, tol=1e-8):
    """Unit 2-norm columns with the first significant entry real and positive."""
    V = np.array(V, dtype=complex)
    if V.ndim == 1:
        return normalize_columns(V[:, None], tol)[:, 0]
    V /= np.linalg.norm(V, axis=0)
    mags = np.abs(V)
    first = np.argmax(mags > tol * mags.max(axis=0), axis=0)
    ph = V[first, np.arange(V.shape[1])]
    V *= (np.conj(ph) / np.abs(ph))[None, :]
    return V


def eig_alpha(M):
    """Dense eigendecomposition in wavenumber form: ``M V = V diag(i alpha)``."""
    lam, V = np.linalg.eig(M)
    return lam / 1j, normalize_columns(V)


def greedy_match(a, b):
    """Bijective pairing of ``a`` onto ``b`` by ascending distance.

    Returns ``perm`` with ``a[k]`` matched to ``b[perm[k]]``.
    """
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape:
        raise UnresolvedPairing("eigenvalue lists differ in length")
    n = len(a)
    d = np.abs(a[:, None] - b[None, :])
    order = np.argsort(d, axis=None, kind="stable")
    perm = -np.ones(n, dtype=int)
    used = np.zeros(n, dtype=bool)
    left = n
    for flat in order:
        i, j = divmod(int(flat), n)
        if perm[i] < 0 and not used[j]:
            perm[i] = j
            used[j] = True
            left -= 1
            if left == 0:
                break
    return perm


def _pairing_is_clear(a, b, perm, scale):
    """Check that every match is clearly closer than any non-degenerate alternative."""
    n = len(a)
    if n < 2:
        return True
    bm = b[perm]
    dist = np.abs(a - bm)
    ctol = CLUSTER_TOL * scale
    d_ab = np.abs(a[:, None] - bm[None, :])
    # alternatives that are themselves degenerate with the match do not count
    same_b = np.abs(bm[:, None] - bm[None, :]) <= ctol
    same_a = np.abs(a[:, None] - a[None, :]) <= ctol
    alt1 = np.where(same_b, np.inf, d_ab).min(axis=1)
    alt2 = np.where(same_a, np.inf, d_ab).min(axis=0)
    return bool(np.all(dist <= PAIRING_RATIO * np.minimum(alt1, alt2) + ctol))


@dataclass
class ContinuationPath:
    """Eigenvalues followed in ``eta``; ``alphas[i]`` are aligned with ``alphas[0]``."""

    etas: list = field(default_factory=list)
    alphas: list = field(default_factory=list)
    vectors: list = field(default_factory=list)
    n_eigs: int = 0


def follow_eigenvalues(matrix_at: Callable[[float], np.ndarray], eta_end: float,
                       start=None, h0=None, keep_vectors=False, max_steps=20000,
                       eta_start=0.0) -> ContinuationPath:
    """Track the eigenvalues of ``matrix_at(eta)`` from ``eta_start`` to ``eta_end``.

    Steps adapt until consecutive spectra pair unambiguously.  ``start`` may supply
    the (alphas, V) already computed at ``eta_start``.
    """
    path = ContinuationPath()
    if start is None:
        a0, V0 = eig_alpha(matrix_at(eta_start))
        path.n_eigs += 1
    else:
        a0, V0 = start
    path.etas.append(eta_start)
    path.alphas.append(np.asarray(a0))
    if keep_vectors:
        path.vectors.append(V0)

    span = eta_end - eta_start
    h = span * 1e-4 if h0 is None else h0
    h_min = abs(span) * 1e-13
    eta, cur = eta_start, np.asarray(a0)
    prev, prev_step = None, None
    steps = 0
    while eta < eta_end:
        steps += 1
        if steps > max_steps:
            raise UnresolvedPairing(f"continuation exceeded {max_steps} steps at eta={eta:.6g}")
        step = min(h, eta_end - eta)
        a1, V1 = eig_alpha(matrix_at(eta + step))
        path.n_eigs += 1
        # linear predictor separates branches that cross each other
        pred = cur if prev is None else cur + (cur - prev) * (step / prev_step)
        perm = greedy_match(pred, a1)
        scale = max(1.0, np.abs(cur).max(), np.abs(a1).max())
        if _pairing_is_clear(pred, a1, perm, scale):
            eta += step
            prev, prev_step, cur = cur, step, a1[perm]
            path.etas.append(eta)
            path.alphas.append(cur)
            if keep_vectors:
                path.vectors.append(V1[:, perm])
            h = step * 2.0
        else:
            h = step / 4.0
            if h < h_min:
                raise UnresolvedPairing(f"eigenvalue branches cannot be separated near eta={eta:.6g}")
    return path


def classify_briggs(alphas_at_s0, alphas_at_eta, threshold=IM_THRESHOLD, paired=True):
    """Label each eigenvalue downstream (+1) or upstream (-1) from its large-eta value.

    With ``paired=False`` the two lists are first matched by nearest distance,
    which is only meaningful when the eta step is small.
    """
    a0 = np.asarray(alphas_at_s0)
    ae = np.asarray(alphas_at_eta)
    if a0.shape != ae.shape:
        raise UnresolvedPairing("eigenvalue lists differ in length")
    if not paired:
        perm = greedy_match(a0, ae)
        scale = max(1.0, np.abs(a0).max(), np.abs(ae).max())
        if not _pairing_is_clear(a0, ae, perm, scale):
            raise UnresolvedPairing("nearest-neighbour pairing is ambiguous")
        ae = ae[perm]
    im = ae.imag
    weak = np.flatnonzero(np.abs(im) < threshold)
    if weak.size:
        raise ClassificationAmbiguous(weak.tolist(), ae[weak].tolist(), threshold)
    return np.where(im > 0, DOWNSTREAM, UPSTREAM)


@dataclass(frozen=True)
class Spectrum:
    """Classified eigendecomposition, columns ordered downstream first."""

    alphas: np.ndarray
    V: np.ndarray
    labels: np.ndarray
    M: np.ndarray
    cond_V: float
    s_used: complex = 0j
    eta_used: float = 0.0
    alphas_eta: Optional[np.ndarray] = None
    path: Optional[ContinuationPath] = field(default=None, repr=False, compare=False)
    operator: Optional[OperatorM] = field(default=None, repr=False, compare=False)
    n_dense_eigs: int = 0
    V_inv: Optional[np.ndarray] = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if self.V_inv is None:
            object.__setattr__(self, "V_inv", np.linalg.inv(self.V))

    @property
    def n(self) -> int:
        return len(self.alphas)

    @property
    def n_plus(self) -> int:
        return int(np.sum(self.labels == DOWNSTREAM))

    @property
    def n_minus(self) -> int:
        return int(np.sum(self.labels == UPSTREAM))

    @property
    def alpha_plus(self) -> np.ndarray:
        return self.alphas[: self.n_plus]

    @property
    def alpha_minus(self) -> np.ndarray:
        return self.alphas[self.n_plus:]

    def residual(self) -> float:
        """max_k ||M v_k - i alpha_k v_k|| / ||M||."""
        R = self.M @ self.V - self.V * (1j * self.alphas)[None, :]
        return float(np.linalg.norm(R, axis=0).max() / max(np.linalg.norm(self.M, 2), 1e-300))

    @classmethod
    def from_labels(cls, M, alphas, V, labels, **kw) -> "Spectrum":
        """Assemble from precomputed pieces, reordering columns downstream first."""
        alphas = np.asarray(alphas, dtype=complex)
        V = np.asarray(V, dtype=complex)
        labels = np.asarray(labels, dtype=int)
        alphas_eta = kw.pop("alphas_eta", None)
        order = _family_order(alphas, labels)
        if alphas_eta is not None:
            alphas_eta = np.asarray(alphas_eta)[order]
        return cls(alphas=alphas[order], V=V[:, order], labels=labels[order],
                   M=np.asarray(M, dtype=complex), cond_V=float(np.linalg.cond(V)) if V.size else 1.0,
                   alphas_eta=alphas_eta, **kw)


def _family_order(alphas, labels):
    idx = np.arange(len(alphas))
    down = idx[labels == DOWNSTREAM]
    up = idx[labels == UPSTREAM]
    key = lambda ii: ii[np.lexsort((alphas[ii].imag, alphas[ii].real))]
    return np.concatenate([key(down), key(up)]).astype(int)


def default_eta_large(M) -> float:
    return ETA_FACTOR * max(1.0, float(np.linalg.norm(M, 2)))


def full_spectrum(builder: Callable[[complex], OperatorM], s0=None, eta_large=None,
                  threshold=IM_THRESHOLD, check_counts=True, keep_vectors=False) -> Spectrum:
    """Dense spectrum of ``M(s0)`` classified by continuation to ``s0 + eta_large``."""
    if s0 is None:
        s0 = getattr(builder, "s", None)
        if s0 is None:
            raise ValueError("s0 is required")
    op0 = builder(s0)
    M0 = np.asarray(op0.M)
    a0, V0 = eig_alpha(M0)
    eta_large = default_eta_large(M0) if eta_large is None else float(eta_large)
    path = follow_eigenvalues(lambda eta: np.asarray(builder(s0 + eta).M), eta_large,
                              start=(a0, V0), keep_vectors=keep_vectors)
    labels = classify_briggs(a0, path.alphas[-1], threshold)
    if check_counts and hasattr(op0, "signs"):
        n_plus = int(np.sum(labels == DOWNSTREAM))
        if n_plus != op0.n_plus:
            raise ClassificationAmbiguous(
                [], [], threshold,
                message=f"Briggs count {n_plus} downstream disagrees with {op0.n_plus} positive characteristics")
    spec = Spectrum.from_labels(M0, a0, V0, labels, s_used=complex(s0), eta_used=eta_large,
                                alphas_eta=path.alphas[-1], path=path, operator=op0,
                                n_dense_eigs=path.n_eigs + 1)
    return spec


def spectrum_from_matrix(M, labels_fn=None, eta_large=None, threshold=IM_THRESHOLD,
                         eta_direction=None):
    """Classify a bare matrix family ``M + eta * eta_direction``.

    Used for toy problems where ``M`` has no physical operator behind it.
    ``eta_direction`` defaults to ``-I`` (the scalar ``M = -s/a`` family).
    """
    M = np.asarray(M, dtype=complex)
    n = M.shape[0]
    Dm = -np.eye(n) if eta_direction is None else np.asarray(eta_direction)

    class _Op:
        def __init__(self, mat):
            self.M = mat

    return full_spectrum(lambda s: _Op(M + (s.real) * Dm), s0=0j, eta_large=eta_large,
                         threshold=threshold, check_counts=False)


@dataclass(frozen=True)
class NearestResult:
    alphas: np.ndarray
    vectors: np.ndarray
    duplicates: np.ndarray
    iterations: np.ndarray


def nearest_eigenpairs(M_new, shifts: Sequence[complex], start_vectors=None, tol=1e-10,
                       max_iter=60, dense_fallback=False) -> NearestResult:
    """Eigenpair of ``M_new`` closest to each shift (in alpha units) by inverse iteration.

    Raises :class:`NoConvergence` naming the shift when the iteration cap is hit,
    unless ``dense_fallback`` is set, in which case a dense solve picks the nearest
    eigenvalue.
    """
    M = np.asarray(getattr(M_new, "M", M_new), dtype=complex)
    shifts = np.atleast_1d(np.asarray(shifts, dtype=complex))
    if shifts.size == 0:
        raise ValueError("at least one shift is required")
    n = M.shape[0]
    normM = max(np.linalg.norm(M, 2), np.finfo(float).tiny)
    rng = np.random.default_rng(12345)
    generic = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    out_a = np.empty(len(shifts), dtype=complex)
    out_v = np.empty((n, len(shifts)), dtype=complex)
    iters = np.zeros(len(shifts), dtype=int)
    dense = None
    for k, sigma in enumerate(shifts):
        shift = 1j * sigma
        lu = _shifted_lu(M, shift, normM)
        v = generic if start_vectors is None else np.asarray(start_vectors)[:, k]
        v = v / np.linalg.norm(v)
        ok = False
        for it in range(1, max_iter + 1):
            y = sla.lu_solve(lu, v)
            v = y / np.linalg.norm(y)
            lam = np.vdot(v, M @ v)
            res = np.linalg.norm(M @ v - lam * v)
            if res <= tol * normM:
                ok = True
                break
        iters[k] = it
        if not ok:
            if not dense_fallback:
                raise NoConvergence(sigma, max_iter)
            if dense is None:
                dense = eig_alpha(M)
            j = int(np.argmin(np.abs(dense[0] - sigma)))
            lam, v = 1j * dense[0][j], dense[1][:, j]
        out_a[k] = lam / 1j
        out_v[:, k] = normalize_columns(v)
    scale = max(1.0, np.abs(out_a).max())
    close = np.abs(out_a[:, None] - out_a[None, :]) <= 1e-8 * scale
    np.fill_diagonal(close, False)
    return NearestResult(alphas=out_a, vectors=out_v, duplicates=close.any(axis=1), iterations=iters)


def _shifted_lu(M, shift, normM):
    n = M.shape[0]
    eps = 0.0
    for _ in range(5):
        with warnings.catch_warnings():
            # a shift sitting exactly on an eigenvalue is expected; it is nudged below
            warnings.simplefilter("ignore", sla.LinAlgWarning)
            lu, piv = sla.lu_factor(M - (shift + eps) * np.eye(n), check_finite=False)
        if np.all(np.diag(lu) != 0):
            return lu, piv
        eps = (eps * 10) or 1e-14 * normM
    return lu, piv


def labels_at(spec: Spectrum, eta: float, builder: Callable[[complex], OperatorM] = None,
              matrix_at=None):
    """Labelled eigendecomposition at ``s_used + eta``, continued from ``spec``.

    Returns ``(alphas, V, labels)`` with columns ordered like ``spec``.
    """
    if matrix_at is None:
        matrix_at = lambda e: np.asarray(builder(spec.s_used + e).M)
    if eta == 0:
        return spec.alphas, spec.V, spec.labels
    path = follow_eigenvalues(matrix_at, eta, start=(spec.alphas, spec.V), keep_vectors=True)
    return path.alphas[-1], path.vectors[-1], spec.labels
