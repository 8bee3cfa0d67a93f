"""Hyperbolic systems, characteristic variables and the semi-discrete marching operator.

A system ``q_t + A q_x + sum_j B_j q_{y_j} + C q = f`` is brought to characteristic
variables ``phi = T q`` (``T A T^-1`` diagonal), discretized in the transverse
directions, Laplace/Fourier transformed, and written as the marching ODE

    d phi / dx = M(s) phi + g

with ``M = Ã^-1 L`` and ``L = -(s I + sum_j i omega_j B̃_j + sum_j B̃_j D_j + C̃)``.
Rows whose characteristic speed vanishes are algebraic and are eliminated by a
Schur complement before ``M`` is formed.

State vectors are ordered node-major: all ``N`` characteristic variables of node
0, then node 1, and so on.  Nodes of a multi-direction grid follow C order of
the grid indices.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
import scipy.linalg as sla

from .errors import NotHyperbolic, NotSingular, SingularBlock

HYPERBOLIC_TOL = 1e-10
SINGULAR_COND_MAX = 1e12
NODE_ORDERING = "node-major, characteristic variables contiguous within a node"


def _frozen(a, dtype=None):
    a = np.array(a, dtype=dtype, copy=True)
    a.setflags(write=False)
    return a


def _pointwise(a, name):
    a = np.asarray(a, dtype=float)
    if a.ndim == 2:
        a = a[None]
    if a.ndim != 3 or a.shape[1] != a.shape[2]:
        raise ValueError(f"{name} must be (N, N) or (n_points, N, N), got shape {a.shape}")
    return a


@dataclass(frozen=True)
class HyperbolicSystem:
    """Coefficients of a linear hyperbolic system.

    Each of ``A``, ``B[j]`` and ``C`` is either one ``(N, N)`` matrix or a stack of
    per-node matrices ``(n_nodes, N, N)`` for coefficients varying across the
    transverse grid.
    """

    A: np.ndarray
    B: tuple = ()
    C: Optional[np.ndarray] = None
    spatial_dim: int = 1
    names: Optional[tuple] = None

    def __post_init__(self):
        A = _pointwise(self.A, "A")
        N = A.shape[1]
        C = np.zeros_like(A) if self.C is None else _pointwise(self.C, "C")
        B = tuple(_pointwise(b, "B") for b in self.B)
        if len(B) != self.spatial_dim - 1:
            raise ValueError(f"expected {self.spatial_dim - 1} transverse flux matrices, got {len(B)}")
        for m in (C, *B):
            if m.shape[1] != N:
                raise ValueError("all coefficient matrices must share the state dimension")
        object.__setattr__(self, "A", _frozen(A))
        object.__setattr__(self, "C", _frozen(C))
        object.__setattr__(self, "B", tuple(_frozen(b) for b in B))
        if self.names is not None and len(self.names) != N:
            raise ValueError("names must have one entry per state variable")
        for Ap in A:
            _real_spectrum(Ap)

    @property
    def n_vars(self) -> int:
        return self.A.shape[1]

    @property
    def n_points(self) -> int:
        return max(m.shape[0] for m in (self.A, self.C, *self.B))


def _real_spectrum(A):
    lam = np.linalg.eigvals(A)
    scale = max(np.linalg.norm(A, 2), np.finfo(float).tiny)
    bad = np.abs(lam.imag) > HYPERBOLIC_TOL * scale
    if np.any(bad):
        raise NotHyperbolic(lam[bad][0], HYPERBOLIC_TOL * scale)
    return np.sort(lam.real)


def _canonical_null_basis(K, m):
    """Real basis of the m-dimensional null space of K, normalized so that the
    basis is independent of the SVD's rotation freedom."""
    _, _, vh = np.linalg.svd(K)
    Z = vh[-m:].T
    if m == 1:
        z = Z[:, 0]
    else:
        _, _, piv = sla.qr(Z.T, pivoting=True)
        rows = np.sort(piv[:m])
        Z = Z @ np.linalg.inv(Z[rows])
        Z[np.abs(Z) < 1e-14] = 0.0
        return _sign_normalize(Z)
    return _sign_normalize(z[:, None])


def _sign_normalize(W):
    W = W / np.linalg.norm(W, axis=0)
    for k in range(W.shape[1]):
        j = np.argmax(np.abs(W[:, k]) > np.abs(W[:, k]).max() * (1 - 1e-12))
        if W[j, k] < 0:
            W[:, k] = -W[:, k]
    return W


def diagonalize_flux(A):
    """Return ``(T, lam)`` with ``T A T^-1 = diag(lam)`` sorted positive, negative, zero.

    Within each sign class entries are in descending order.
    """
    A = np.asarray(A, dtype=float)
    N = A.shape[0]
    lam = _real_spectrum(A)
    scale = max(np.linalg.norm(A, 2), np.finfo(float).tiny)
    tol = HYPERBOLIC_TOL * scale
    lam[np.abs(lam) <= tol] = 0.0

    # cluster (numerically) repeated eigenvalues; lam is ascending
    clusters = [[lam[0]]]
    for v in lam[1:]:
        if v - clusters[-1][-1] <= max(1e-8 * scale, tol):
            clusters[-1].append(v)
        else:
            clusters.append([v])

    cols, vals = [], []
    for cl in clusters:
        v = float(np.mean(cl))
        m = len(cl)
        Z = _canonical_null_basis(A - v * np.eye(N), m)
        if np.linalg.norm(A @ Z - v * Z) > 1e-8 * scale * np.sqrt(m):
            raise NotHyperbolic(complex(v), tol)
        cols.append(Z)
        vals.extend([v] * m)
    W = np.hstack(cols)
    vals = np.array(vals)
    if np.linalg.matrix_rank(W) < N:
        raise NotHyperbolic(complex(vals[0]), tol)

    cat = np.where(vals > 0, 0, np.where(vals < 0, 1, 2))
    order = np.lexsort((-vals, cat))
    W = W[:, order]
    vals = vals[order]
    T = np.linalg.inv(W)
    return T, vals


@dataclass(frozen=True)
class CharacteristicForm:
    """System written in characteristic variables, pointwise.

    Arrays carry a leading point axis (length 1 for constant coefficients).
    ``A_diag[p]`` holds the diagonal of ``Ã`` at point ``p``.
    """

    T: np.ndarray
    T_inv: np.ndarray
    A_diag: np.ndarray
    B_tilde: tuple
    C_tilde: np.ndarray
    spatial_dim: int
    names: Optional[tuple] = None

    @property
    def n_vars(self) -> int:
        return self.A_diag.shape[1]

    @property
    def n_points(self) -> int:
        return self.A_diag.shape[0]

    @property
    def signs(self) -> np.ndarray:
        return np.sign(self.A_diag).astype(int)

    @property
    def n_plus(self) -> int:
        return int(np.sum(self.A_diag > 0))

    @property
    def n_minus(self) -> int:
        return int(np.sum(self.A_diag < 0))

    @property
    def n_zero(self) -> int:
        return int(np.sum(self.A_diag == 0))

    def as_system(self) -> HyperbolicSystem:
        """The characteristic form viewed as a system in its own right."""
        A = np.stack([np.diag(a) for a in self.A_diag])
        return HyperbolicSystem(A=A, B=self.B_tilde, C=self.C_tilde,
                                spatial_dim=self.spatial_dim)


def characteristic_form(system: HyperbolicSystem) -> CharacteristicForm:
    n_pts = system.n_points
    N = system.n_vars

    def at(a, p):
        return a[p] if a.shape[0] > 1 else a[0]

    Ts, Tis, diags, Cs = [], [], [], []
    Bs = [[] for _ in system.B]
    cache = {}
    for p in range(n_pts):
        Ap = at(system.A, p)
        key = Ap.tobytes()
        if key not in cache:
            T, lam = diagonalize_flux(Ap)
            cache[key] = (T, np.linalg.inv(T), lam)
        T, Ti, lam = cache[key]
        Ts.append(T)
        Tis.append(Ti)
        diags.append(lam)
        Cs.append(T @ at(system.C, p) @ Ti)
        for j, b in enumerate(system.B):
            Bs[j].append(T @ at(b, p) @ Ti)
    return CharacteristicForm(
        T=_frozen(Ts), T_inv=_frozen(Tis), A_diag=_frozen(diags),
        B_tilde=tuple(_frozen(b) for b in Bs), C_tilde=_frozen(Cs),
        spatial_dim=system.spatial_dim, names=system.names,
    )


# ---------------------------------------------------------------------------
# transverse discretization
# ---------------------------------------------------------------------------

def fd_weights(x0, x, m):
    """Finite-difference weights for the m-th derivative at x0 on nodes x (Fornberg)."""
    x = np.asarray(x, dtype=float)
    n = len(x)
    c = np.zeros((n, m + 1))
    c1, c4 = 1.0, x[0] - x0
    c[0, 0] = 1.0
    for i in range(1, n):
        mn = min(i, m)
        c2, c5, c4 = 1.0, c4, x[i] - x0
        for j in range(i):
            c3 = x[i] - x[j]
            c2 *= c3
            if j == i - 1:
                for k in range(mn, 0, -1):
                    c[i, k] = c1 * (k * c[i - 1, k - 1] - c5 * c[i - 1, k]) / c2
                c[i, 0] = -c1 * c5 * c[i - 1, 0] / c2
            for k in range(mn, 0, -1):
                c[j, k] = (c4 * c[j, k] - k * c[j, k - 1]) / c3
            c[j, 0] = c4 * c[j, 0] / c3
        c1 = c2
    return c[:, m]


BC_TAGS = ("periodic", "dirichlet", "wall")


def difference_matrix(y, order=2, bc=("dirichlet", "dirichlet")):
    """First-derivative matrix on nodes ``y``.

    ``bc`` is ``"periodic"`` or a ``(low, high)`` pair of ``"dirichlet"`` (zero
    ghost value just outside the grid, stencil truncated) or ``"wall"`` (boundary
    node belongs to the grid, one-sided stencil).
    """
    y = np.asarray(y, dtype=float)
    n = len(y)
    if order % 2 or order < 2:
        raise ValueError("order must be a positive even integer")
    half = order // 2
    D = np.zeros((n, n))
    if bc == "periodic" or bc == ("periodic", "periodic"):
        h = np.diff(y)
        if not np.allclose(h, h[0], rtol=1e-10):
            raise ValueError("periodic differences need a uniform grid")
        h = h[0]
        offs = np.arange(-half, half + 1)
        w = fd_weights(0.0, offs * h, 1)
        for i in range(n):
            for o, wk in zip(offs, w):
                D[i, (i + o) % n] += wk
        return D
    lo, hi = bc
    for tag in (lo, hi):
        if tag not in ("dirichlet", "wall"):
            raise ValueError(f"unknown boundary tag {tag!r}")
    h0 = y[1] - y[0]
    h1 = y[-1] - y[-2]
    # extended node set with ghost boundary points for dirichlet sides
    ext = list(y)
    first = 0
    if lo == "dirichlet":
        ext = [y[0] - h0] + ext
        first = 1
    if hi == "dirichlet":
        ext = ext + [y[-1] + h1]
    ext = np.array(ext)
    m = len(ext)
    for i in range(n):
        e = i + first
        lo_room = e
        hi_room = m - 1 - e
        short_lo = lo_room < half
        short_hi = hi_room < half
        if (short_lo and lo == "wall") or (short_hi and hi == "wall"):
            # one-sided stencil against a wall
            width = min(order + 1, m)
            idx = np.arange(0, width) if short_lo and lo == "wall" else np.arange(m - width, m)
        else:
            # centred, truncated next to a zero ghost value
            k = min(half, lo_room, hi_room)
            idx = np.arange(e - k, e + k + 1)
        w = fd_weights(ext[e], ext[idx], 1)
        for j, wk in zip(idx, w):
            jj = j - first
            if 0 <= jj < n:
                D[i, jj] += wk
    return D


@dataclass(frozen=True)
class GridDirection:
    coords: np.ndarray
    bc: tuple = ("dirichlet", "dirichlet")
    order: int = 2
    wall_zero: tuple = ()


@dataclass(frozen=True)
class TransverseDiscretization:
    """How each transverse direction is treated.

    ``directions[j]`` is either a :class:`GridDirection` (finite differences) or
    ``None`` (Fourier, wavenumber supplied at assembly time).  ``wall_zero`` on a
    grid direction lists characteristic-variable indices forced to zero at every
    ``"wall"`` boundary node of that direction.
    """

    directions: tuple = ()
    D: tuple = field(default=(), compare=False)

    def __post_init__(self):
        Ds = []
        for d in self.directions:
            if d is None:
                Ds.append(None)
            else:
                bc = "periodic" if d.bc in ("periodic", ("periodic", "periodic")) else tuple(d.bc)
                Ds.append(_frozen(difference_matrix(d.coords, d.order, bc)))
        object.__setattr__(self, "D", tuple(Ds))

    @property
    def grid_shape(self) -> tuple:
        return tuple(len(d.coords) for d in self.directions if d is not None)

    @property
    def n_nodes(self) -> int:
        return int(np.prod(self.grid_shape)) if self.grid_shape else 1

    @property
    def grid(self) -> tuple:
        return tuple(d.coords for d in self.directions if d is not None)

    def full_difference(self, j) -> np.ndarray:
        """Node-space difference matrix of transverse direction j (Kronecker lifted)."""
        dims = [d for d in self.directions if d is not None]
        pos = [i for i, d in enumerate(self.directions) if d is not None].index(j)
        mats = [np.eye(len(d.coords)) for d in dims]
        mats[pos] = self.D[j]
        out = mats[0]
        for m in mats[1:]:
            out = np.kron(out, m)
        return out

    def wall_nodes(self):
        """Yield (node_index, zero_vars) for nodes on tagged wall boundaries."""
        shape = self.grid_shape
        grid_dirs = [d for d in self.directions if d is not None]
        out = {}
        for pos, d in enumerate(grid_dirs):
            if d.bc in ("periodic", ("periodic", "periodic")):
                continue
            for side, tag in zip((0, shape[pos] - 1), d.bc):
                if tag != "wall" or not d.wall_zero:
                    continue
                for node in np.ndindex(*shape):
                    if node[pos] == side:
                        flat = int(np.ravel_multi_index(node, shape))
                        out.setdefault(flat, set()).update(d.wall_zero)
        return {k: tuple(sorted(v)) for k, v in sorted(out.items())}


def fourier_only(n_transverse: int) -> TransverseDiscretization:
    return TransverseDiscretization(directions=(None,) * n_transverse)


# ---------------------------------------------------------------------------
# operator assembly
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SingularReduction:
    """Schur-complement elimination of the algebraic (zero-speed) rows.

    With ``Ã φ_x = L φ + f`` partitioned into active (±) and algebraic (0) rows,
    ``φ0 = -L00^-1 (L0± φ± + f0)``.
    """

    L_pp: np.ndarray
    L_p0: np.ndarray
    L_0p: np.ndarray
    L_00: np.ndarray
    A_pm: np.ndarray
    f_pm: np.ndarray
    f_0: np.ndarray
    pm_index: np.ndarray
    zero_index: np.ndarray
    cond_L00: float
    _lu: tuple = field(repr=False, compare=False, default=None)

    def recover_zero(self, phi_pm):
        phi_pm = np.asarray(phi_pm)
        rhs = self.L_0p @ phi_pm + (self.f_0 if phi_pm.ndim == 1 else self.f_0[:, None])
        return -sla.lu_solve(self._lu, rhs)

    def assemble_full(self, phi_pm):
        phi_pm = np.asarray(phi_pm)
        n = len(self.pm_index) + len(self.zero_index)
        out = np.zeros((n,) + phi_pm.shape[1:], dtype=complex)
        out[self.pm_index] = phi_pm
        out[self.zero_index] = self.recover_zero(phi_pm)
        return out

    def residual(self, phi_pm):
        """Relative residual of the eliminated row block."""
        phi0 = self.recover_zero(phi_pm)
        r = self.L_0p @ phi_pm + self.L_00 @ phi0 + self.f_0
        scale = (np.linalg.norm(self.L_0p @ phi_pm) + np.linalg.norm(self.L_00 @ phi0)
                 + np.linalg.norm(self.f_0))
        return np.linalg.norm(r) / max(scale, np.finfo(float).tiny)


def eliminate_zero_block(A_diag, L, f, zero_mask):
    """Reduce ``diag(A_diag) φ_x = L φ + f`` with vanishing entries of ``A_diag``.

    Returns ``(M, g, reduction)`` for the active rows.
    """
    A_diag = np.asarray(A_diag)
    zero_mask = np.asarray(zero_mask, dtype=bool)
    if not zero_mask.any():
        raise NotSingular("no zero characteristic speeds: use assemble_operator directly")
    L = np.asarray(L, dtype=complex)
    f = np.asarray(f, dtype=complex)
    pm = np.flatnonzero(~zero_mask)
    z = np.flatnonzero(zero_mask)
    L_pp = L[np.ix_(pm, pm)]
    L_p0 = L[np.ix_(pm, z)]
    L_0p = L[np.ix_(z, pm)]
    L_00 = L[np.ix_(z, z)]
    cond = np.linalg.cond(L_00)
    if not np.isfinite(cond) or cond > SINGULAR_COND_MAX:
        raise SingularBlock(float(cond) if np.isfinite(cond) else np.inf)
    lu = sla.lu_factor(L_00)
    A_pm = A_diag[pm]
    schur = L_pp - L_p0 @ sla.lu_solve(lu, L_0p)
    g = (f[pm] - L_p0 @ sla.lu_solve(lu, f[z])) / A_pm
    M = schur / A_pm[:, None]
    red = SingularReduction(
        L_pp=_frozen(L_pp), L_p0=_frozen(L_p0), L_0p=_frozen(L_0p), L_00=_frozen(L_00),
        A_pm=_frozen(A_pm), f_pm=_frozen(f[pm]), f_0=_frozen(f[z]),
        pm_index=_frozen(pm), zero_index=_frozen(z), cond_L00=float(cond), _lu=lu,
    )
    return M, g, red


@dataclass(frozen=True)
class OperatorM:
    """Semi-discrete marching operator ``dφ/dx = M φ + g`` at one station.

    ``signs`` gives the characteristic sign (+1/-1) of every active row; the
    positive rows pair with the downstream-going eigenvectors.
    """

    M: np.ndarray
    s: complex
    omega_t: tuple
    g_hat: np.ndarray
    signs: np.ndarray
    reduction: Optional[SingularReduction] = None
    form: Optional[CharacteristicForm] = field(default=None, repr=False, compare=False)
    provenance: dict = field(default_factory=dict, compare=False)

    @property
    def n(self) -> int:
        return self.M.shape[0]

    @property
    def n_plus(self) -> int:
        return int(np.sum(self.signs > 0))

    @property
    def n_minus(self) -> int:
        return int(np.sum(self.signs < 0))

    @property
    def plus_rows(self) -> np.ndarray:
        return np.flatnonzero(self.signs > 0)

    @property
    def minus_rows(self) -> np.ndarray:
        return np.flatnonzero(self.signs < 0)

    def full_state(self, phi):
        """Characteristic state including reconstructed algebraic rows."""
        if self.reduction is None:
            return np.asarray(phi, dtype=complex)
        return self.reduction.assemble_full(phi)

    def physical_state(self, phi):
        """Primitive variables ``q = T^-1 φ``, shape ``(n_nodes, N)``."""
        if self.form is None:
            raise ValueError("operator carries no characteristic form")
        full = self.full_state(phi)
        N = self.form.n_vars
        nodes = full.reshape(-1, N)
        Ti = self.form.T_inv
        if Ti.shape[0] == 1:
            return nodes @ Ti[0].T
        return np.einsum("pij,pj->pi", Ti, nodes)


def _node_blocks(a, n_nodes):
    return a if a.shape[0] == n_nodes else np.broadcast_to(a[0], (n_nodes,) + a.shape[1:])


def assemble_full_system(form: CharacteristicForm, disc: TransverseDiscretization, s,
                         omega_t: Sequence[float] = (), forcing=None):
    """Return ``(A_diag, L, f)`` of ``diag(A_diag) φ_x = L φ + f`` over all nodes.

    Wall-tagged characteristic variables become algebraic rows ``φ_k = 0``.
    """
    n_nodes = disc.n_nodes
    N = form.n_vars
    if form.n_points not in (1, n_nodes):
        raise ValueError(f"coefficients given at {form.n_points} points but grid has {n_nodes} nodes")
    if len(disc.directions) != form.spatial_dim - 1:
        raise ValueError("discretization must describe every transverse direction")
    n_fourier = sum(d is None for d in disc.directions)
    omega_t = tuple(omega_t)
    if len(omega_t) != n_fourier:
        raise ValueError(f"expected {n_fourier} transverse wavenumbers, got {len(omega_t)}")
    s = complex(s)
    n = N * n_nodes

    A_diag = np.array(_node_blocks(form.A_diag, n_nodes)).reshape(n)
    T = _node_blocks(form.T, n_nodes)
    Ti = _node_blocks(form.T_inv, n_nodes)
    C = _node_blocks(form.C_tilde, n_nodes)

    K = sla.block_diag(*C).astype(complex) + s * np.eye(n)
    w_iter = iter(omega_t)
    for j, d in enumerate(disc.directions):
        Bt = _node_blocks(form.B_tilde[j], n_nodes)
        if d is None:
            K += 1j * next(w_iter) * sla.block_diag(*Bt)
        else:
            Dn = disc.full_difference(j)
            if form.n_points == 1:
                K += np.kron(Dn, Bt[0])
            else:
                # block (i, k) = D_ik * B̃_i T_i T_k^-1
                BT = np.einsum("pij,pjk->pik", Bt, T)
                for i, k in zip(*np.nonzero(Dn)):
                    K[i * N:(i + 1) * N, k * N:(k + 1) * N] += Dn[i, k] * (BT[i] @ Ti[k])
    L = -K

    if forcing is None:
        f = np.zeros(n, dtype=complex)
    else:
        fq = np.asarray(forcing, dtype=complex).reshape(n_nodes, N)
        f = np.einsum("pij,pj->pi", np.asarray(T), fq).reshape(n)

    for node, zvars in disc.wall_nodes().items():
        for v in zvars:
            r = node * N + v
            A_diag[r] = 0.0
            L[r] = 0.0
            L[r, r] = 1.0
            f[r] = 0.0
    return A_diag, L, f


def assemble_operator(form: CharacteristicForm, disc: TransverseDiscretization, s,
                      omega_t: Sequence[float] = (), forcing=None, provenance=None) -> OperatorM:
    """Build ``M(s)``; algebraic rows, if any, are eliminated first."""
    if complex(s).real < 0:
        raise ValueError("Re(s) must be non-negative")
    A_diag, L, f = assemble_full_system(form, disc, s, omega_t, forcing)
    prov = {"node_ordering": NODE_ORDERING, "n_nodes": disc.n_nodes}
    prov.update(provenance or {})
    zero = A_diag == 0.0
    if zero.any():
        M, g, red = eliminate_zero_block(A_diag, L, f, zero)
        signs = np.sign(A_diag[red.pm_index]).astype(int)
    else:
        M = L / A_diag[:, None]
        g = f / A_diag
        red = None
        signs = np.sign(A_diag).astype(int)
    return OperatorM(M=_frozen(M), s=complex(s), omega_t=tuple(omega_t), g_hat=_frozen(g),
                     signs=_frozen(signs), reduction=red, form=form, provenance=prov)


def reduce_singular(form, disc, s, omega_t=(), forcing=None):
    """Like :func:`assemble_operator` but insists on (and returns) the reduction."""
    A_diag, L, f = assemble_full_system(form, disc, s, omega_t, forcing)
    zero = A_diag == 0.0
    if not zero.any():
        raise NotSingular("no zero characteristic speeds: use assemble_operator directly")
    op = assemble_operator(form, disc, s, omega_t, forcing)
    return op, op.reduction


def operator_factory(form, disc, omega_t=(), forcing=None, provenance=None):
    """Callable ``s -> OperatorM`` for spectral classification."""
    def build(s):
        return assemble_operator(form, disc, s, omega_t, forcing, provenance)
    build.form = form
    build.disc = disc
    build.omega_t = tuple(omega_t)
    return build


def operator_from_matrix(M, signs, s=0j, g_hat=None):
    """Wrap a bare matrix; used for toy problems and tests."""
    M = np.asarray(M, dtype=complex)
    g = np.zeros(M.shape[0], dtype=complex) if g_hat is None else np.asarray(g_hat, dtype=complex)
    return OperatorM(M=_frozen(M), s=complex(s), omega_t=(), g_hat=_frozen(g),
                     signs=_frozen(np.asarray(signs, dtype=int)))
