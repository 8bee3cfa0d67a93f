"""Desk-scale testbeds: linearized Euler about uniform flow and about a parallel shear layer.

Primitive variables are ``(rho, u, v, p)`` in 2D and ``(rho, u, v, w, p)`` in 3D,
linearized about a base state with unit density and speed of sound ``a``.  The
shear layer uses ``u(y) = u0 + du * tanh(y / delta)`` on ``y in (-half_width,
half_width)`` with zero-Dirichlet ghost values, or a wall at ``y = -half_width``
on which the normal velocity vanishes.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Callable, Optional

import numpy as np

from .system import (
    CharacteristicForm,
    GridDirection,
    HyperbolicSystem,
    OperatorM,
    TransverseDiscretization,
    assemble_operator,
    characteristic_form,
)


def euler_matrices(dim, u, a, dudy=0.0):
    """Flux and coupling matrices of the linearized Euler equations at one point."""
    if dim == 2:
        A = np.array([[u, 1, 0, 0], [0, u, 0, 1], [0, 0, u, 0], [0, a * a, 0, u]], dtype=float)
        By = np.array([[0, 0, 1, 0], [0, 0, 0, 0], [0, 0, 0, 1], [0, 0, a * a, 0]], dtype=float)
        C = np.zeros((4, 4))
        C[1, 2] = dudy
        return A, [By], C
    if dim == 3:
        A = np.zeros((5, 5))
        A[np.arange(5), np.arange(5)] = u
        A[0, 1] = 1
        A[1, 4] = 1
        A[4, 1] = a * a
        By = np.zeros((5, 5))
        By[0, 2] = 1
        By[2, 4] = 1
        By[4, 2] = a * a
        Bz = np.zeros((5, 5))
        Bz[0, 3] = 1
        Bz[3, 4] = 1
        Bz[4, 3] = a * a
        C = np.zeros((5, 5))
        C[1, 2] = dudy
        return A, [By, Bz], C
    raise ValueError("dim must be 2 or 3")


EULER_NAMES = {2: ("rho", "u", "v", "p"), 3: ("rho", "u", "v", "w", "p")}


@dataclass(frozen=True)
class Testbed:
    """A system, its discretization and default transform parameters."""

    name: str
    system: HyperbolicSystem
    disc: TransverseDiscretization
    s: complex
    omega_t: tuple = ()
    params: dict = field(default_factory=dict)

    @cached_property
    def form(self) -> CharacteristicForm:
        return characteristic_form(self.system)

    def operator(self, s=None, forcing=None) -> OperatorM:
        s = self.s if s is None else s
        return assemble_operator(self.form, self.disc, s, self.omega_t, forcing,
                                 provenance={"testbed": self.name, **self.params})

    def builder(self) -> Callable[[complex], OperatorM]:
        """Operator factory ``s -> M(s)`` used for Briggs classification."""
        return lambda s: self.operator(s)

    @property
    def n_nodes(self) -> int:
        return self.disc.n_nodes


def uniform_euler(dim=2, u=0.5, a=1.0, n_nodes=8, omega=1.0, omega_z=0.5,
                  period=2 * np.pi, order=2) -> Testbed:
    """Euler about uniform flow on a periodic transverse grid.

    In 3D the second transverse direction is Fourier transformed with wavenumber
    ``omega_z``.
    """
    if n_nodes < 1:
        raise ValueError("n_nodes must be positive")
    A, B, C = euler_matrices(dim, u, a)
    y = np.arange(n_nodes) * (period / n_nodes)
    directions = (GridDirection(coords=y, bc="periodic", order=order),)
    omega_t = ()
    if dim == 3:
        directions = directions + (None,)
        omega_t = (omega_z,)
    system = HyperbolicSystem(A=A, B=B, C=C, spatial_dim=dim, names=EULER_NAMES[dim])
    disc = TransverseDiscretization(directions=directions)
    return Testbed(name=f"uniform_euler_{dim}d", system=system, disc=disc, s=1j * omega,
                   omega_t=omega_t,
                   params={"u": u, "a": a, "n_nodes": n_nodes, "omega": omega, "order": order})


def tanh_profile(u0, du, delta):
    def profile(y):
        return u0 + du * np.tanh(y / delta)

    def derivative(y):
        return du / (delta * np.cosh(y / delta) ** 2)

    return profile, derivative


def shear_euler(n_nodes=16, u0=-0.15, du=0.4, delta=1.0, a=1.0, half_width=5.0,
                omega=0.3, order=2, reverse=False, wall=False,
                u_profile: Optional[Callable] = None, du_profile: Optional[Callable] = None
                ) -> Testbed:
    """2D Euler about the parallel shear layer ``u0 + du tanh(y / delta)``.

    The defaults give a counterflowing layer (``u`` from -0.55 to 0.25) whose 16
    nodes carry 30 downstream and 34 upstream modes, so ``M`` is 64 x 64.

    Parameters
    ----------
    n_nodes : int
        Interior transverse nodes; ``M`` has dimension ``4 * n_nodes``.
    reverse : bool
        Negate the base flow so upstream-going waves outnumber downstream ones.
    wall : bool
        Put a wall node at the lower edge where ``v = 0`` is imposed as an
        algebraic row.
    u_profile, du_profile : callable, optional
        Replace the tanh profile (``du_profile`` defaults to a centred difference).
    """
    if u_profile is None:
        u_profile, du_profile = tanh_profile(u0, du, delta)
    elif du_profile is None:
        def du_profile(y, f=u_profile):
            h = 1e-6
            return (f(y + h) - f(y - h)) / (2 * h)
    if n_nodes < 1:
        raise ValueError("n_nodes must be positive")
    sign = -1.0 if reverse else 1.0

    if wall:
        y = np.linspace(-half_width, half_width, n_nodes + 1)[:-1]
        bc = ("wall", "dirichlet")
    else:
        y = np.linspace(-half_width, half_width, n_nodes + 2)[1:-1]
        bc = ("dirichlet", "dirichlet")
    ub = sign * np.asarray(u_profile(y), dtype=float)
    dub = sign * np.asarray(du_profile(y), dtype=float)

    As, Bs, Cs = [], [], []
    for uk, dk in zip(ub, dub):
        A, B, C = euler_matrices(2, uk, a, dk)
        As.append(A)
        Bs.append(B[0])
        Cs.append(C)
    system = HyperbolicSystem(A=np.array(As), B=(np.array(Bs),), C=np.array(Cs),
                              spatial_dim=2, names=EULER_NAMES[2])
    # characteristic ordering is (u+a, entropy, v, u-a) for either flow direction
    wall_zero = (2,)
    disc = TransverseDiscretization(directions=(
        GridDirection(coords=y, bc=bc, order=order, wall_zero=wall_zero if wall else ()),))
    name = "shear_euler" + ("_reversed" if reverse else "") + ("_wall" if wall else "")
    return Testbed(name=name, system=system, disc=disc, s=1j * omega,
                   params={"n_nodes": n_nodes, "u0": u0, "du": du, "delta": delta, "a": a,
                           "half_width": half_width, "omega": omega, "order": order,
                           "reverse": reverse, "wall": wall})


def spreading_shear(x, delta0=1.0, spread=0.01, **kwargs) -> Testbed:
    """Shear layer whose thickness grows slowly with the marching coordinate."""
    return shear_euler(delta=delta0 * (1.0 + spread * x), **kwargs)


def sonic_crossing(x, x_cross=1.0, n_nodes=16, peak=0.2, width=0.4, **kwargs) -> Testbed:
    """Shear layer whose centre node accelerates past the speed of sound at ``x_cross``.

    The base flow is ``u0 + du tanh(y/delta)`` plus a narrow jet centred on the node
    closest to the layer centre, so exactly one node changes from subsonic to
    supersonic between stations on either side of ``x_cross``.
    """
    u0 = kwargs.pop("u0", 0.5)
    du = kwargs.pop("du", 0.3)
    delta = kwargs.pop("delta", 1.0)
    a = kwargs.get("a", 1.0)
    half_width = kwargs.get("half_width", 5.0)
    y = np.linspace(-half_width, half_width, n_nodes + 2)[1:-1]
    yc = y[np.argmin(np.abs(y))]
    base, dbase = tanh_profile(u0, du, delta)
    # jet amplitude chosen so that the centre node reaches a exactly at x_cross
    amp_cross = a - base(yc)
    amp = amp_cross * (1.0 + peak * np.tanh(x - x_cross))

    def u(yy):
        return base(yy) + amp * np.exp(-((yy - yc) / width) ** 8)

    def du_(yy):
        g = np.exp(-((yy - yc) / width) ** 8)
        return dbase(yy) - amp * g * 8 * (yy - yc) ** 7 / width ** 8

    if np.isclose(x, x_cross):
        raise ValueError("station placed exactly on the sonic crossing")
    tb = shear_euler(n_nodes=n_nodes, u_profile=u, du_profile=du_, **kwargs)
    params = {**tb.params, "u0": u0, "du": du, "delta": delta, "x": x, "x_cross": x_cross,
              "peak": peak, "width": width}
    return replace(tb, name="sonic_crossing", params=params)
