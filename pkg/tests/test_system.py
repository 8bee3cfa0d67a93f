import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from owns.errors import NotHyperbolic, NotSingular, SingularBlock
from owns.system import (
    GridDirection,
    HyperbolicSystem,
    TransverseDiscretization,
    assemble_operator,
    characteristic_form,
    difference_matrix,
    eliminate_zero_block,
    fourier_only,
    reduce_singular,
)
from owns.testbeds import euler_matrices, shear_euler, uniform_euler


def test_scalar_system_gives_i_omega_over_a():
    sys_ = HyperbolicSystem(A=np.array([[2.0]]), spatial_dim=1)
    op = assemble_operator(characteristic_form(sys_), fourier_only(0), 0.7j)
    # M = -s/a with the sign convention dphi/dx = M phi
    assert op.M.shape == (1, 1)
    assert op.M[0, 0] == pytest.approx(-0.7j / 2.0)


def test_euler_3d_flux_eigenvalues():
    u, a = 0.5, 1.0
    A, B, C = euler_matrices(3, u, a)
    form = characteristic_form(HyperbolicSystem(A=A, B=B, C=C, spatial_dim=3))
    np.testing.assert_allclose(form.A_diag[0], [u + a, u, u, u, u - a], atol=1e-12)
    assert (form.n_plus, form.n_minus, form.n_zero) == (4, 1, 0)


def test_euler_2d_counts():
    A, B, C = euler_matrices(2, 0.5, 1.0)
    form = characteristic_form(HyperbolicSystem(A=A, B=B, C=C, spatial_dim=2))
    assert (form.n_plus, form.n_minus) == (3, 1)


def test_supersonic_euler_has_no_negative_characteristics():
    A, B, C = euler_matrices(3, 1.5, 1.0)
    form = characteristic_form(HyperbolicSystem(A=A, B=B, C=C, spatial_dim=3))
    assert (form.n_plus, form.n_minus) == (5, 0)


def test_diagonal_flux_is_a_permutation():
    form = characteristic_form(HyperbolicSystem(A=np.diag([-1.0, 1.0])))
    T = form.T[0]
    assert np.allclose(np.abs(T), [[0, 1], [1, 0]])
    assert form.n_plus == form.n_minus == 1


def test_sign_ordering_plus_minus_zero():
    form = characteristic_form(HyperbolicSystem(A=np.diag([0.0, -2.0, 3.0, 1.0])))
    np.testing.assert_array_equal(form.A_diag[0], [3.0, 1.0, -2.0, 0.0])


def test_not_hyperbolic_reports_eigenvalue():
    with pytest.raises(NotHyperbolic) as exc:
        HyperbolicSystem(A=np.array([[0.0, 1.0], [-1.0, 0.0]]))
    assert abs(exc.value.eigenvalue.imag) == pytest.approx(1.0)


def test_characteristic_form_is_idempotent():
    A, B, C = euler_matrices(2, 0.3, 1.0)
    form = characteristic_form(HyperbolicSystem(A=A, B=B, C=C, spatial_dim=2))
    again = characteristic_form(form.as_system())
    np.testing.assert_allclose(again.A_diag, form.A_diag, atol=1e-14)
    np.testing.assert_allclose(np.abs(again.T[0]), np.eye(4), atol=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.integers(min_value=0, max_value=2**31 - 1), st.integers(min_value=2, max_value=6))
def test_transform_round_trip(seed, N):
    rng = np.random.default_rng(seed)
    lam = rng.uniform(-2, 2, N)
    W = rng.standard_normal((N, N)) + 3 * np.eye(N)
    A = W @ np.diag(lam) @ np.linalg.inv(W)
    form = characteristic_form(HyperbolicSystem(A=A))
    T, Ti = form.T[0], form.T_inv[0]
    back = Ti @ np.diag(form.A_diag[0]) @ T
    assert np.linalg.norm(back - A) <= 1e-10 * np.linalg.norm(A)


def test_periodic_difference_rows_sum_to_zero():
    y = np.arange(8) * (2 * np.pi / 8)
    for order in (2, 4, 6):
        D = difference_matrix(y, order, "periodic")
        np.testing.assert_allclose(D.sum(axis=1), 0.0, atol=1e-12)
        np.testing.assert_allclose(D @ np.sin(y), np.cos(y), atol=0.25)


def test_difference_matrix_order_of_accuracy():
    errs = []
    for n in (32, 64):
        y = np.arange(n) * (2 * np.pi / n)
        errs.append(np.abs(difference_matrix(y, 4, "periodic") @ np.sin(y) - np.cos(y)).max())
    assert errs[0] / errs[1] == pytest.approx(16, rel=0.1)


def test_uniform_euler_operator_shape(uniform_tb):
    op = uniform_tb.operator()
    assert op.M.shape == (32, 32)
    assert (op.n_plus, op.n_minus) == (24, 8)
    assert op.provenance["node_ordering"].startswith("node-major")


def test_block_consistency_m_equals_s_over_a():
    A = np.diag([2.0, -0.5, 1.0])
    s = 0.3 + 1.1j
    y = np.linspace(0, 1, 5)
    form = characteristic_form(HyperbolicSystem(A=A, B=(np.zeros((3, 3)),), spatial_dim=2))
    disc = TransverseDiscretization(directions=(GridDirection(coords=y),))
    op = assemble_operator(form, disc, s)
    expected = np.kron(np.eye(5), np.diag(-s / form.A_diag[0]))
    np.testing.assert_allclose(op.M, expected, atol=1e-14)


def test_negative_real_part_rejected(uniform_tb):
    with pytest.raises(ValueError):
        uniform_tb.operator(-0.1 + 1j)


def test_reduce_singular_requires_zero_speeds(uniform_tb):
    with pytest.raises(NotSingular):
        reduce_singular(uniform_tb.form, uniform_tb.disc, uniform_tb.s)


def test_recover_zero_direct_substitution():
    L = np.array([[1.0, 0.5], [1.0, 2.0]])
    M, g, red = eliminate_zero_block(np.array([1.0, 0.0]), L, np.zeros(2), [False, True])
    phi = np.array([3.0 + 1j])
    np.testing.assert_allclose(red.recover_zero(phi), -0.5 * phi)
    # Schur complement: 1 - 0.5 * 1 / 2
    np.testing.assert_allclose(M, [[0.75]])


def test_singular_block_detected():
    L = np.array([[1.0, 1.0], [1.0, 0.0]])
    with pytest.raises(SingularBlock):
        eliminate_zero_block(np.array([1.0, 0.0]), L, np.zeros(2), [False, True])


def _random_singular_system(seed, N=6):
    rng = np.random.default_rng(seed)
    lam = np.array([1.5, 0.7, 0.2, -0.4, -1.1, 0.0])[:N]
    W = rng.standard_normal((N, N)) + 3 * np.eye(N)
    A = W @ np.diag(lam) @ np.linalg.inv(W)
    C = rng.standard_normal((N, N))
    return HyperbolicSystem(A=A, C=C), rng


def test_random_singular_system_residual():
    system, rng = _random_singular_system(0)
    form = characteristic_form(system)
    assert form.n_zero == 1
    for _ in range(20):
        f = rng.standard_normal(6) + 1j * rng.standard_normal(6)
        op, red = reduce_singular(form, fourier_only(0), 0.5j, forcing=f)
        assert op.n == 5
        phi = rng.standard_normal(5) + 1j * rng.standard_normal(5)
        assert red.residual(phi) <= 1e-10


def test_reduction_matches_least_squares_dae_solve():
    system, rng = _random_singular_system(1)
    form = characteristic_form(system)
    op, red = reduce_singular(form, fourier_only(0), 0.5j)
    phi = rng.standard_normal(5) + 1j * rng.standard_normal(5)
    full = red.assemble_full(phi)
    # algebraic rows: L_0 phi_full = 0, solved in the least-squares sense for phi_0
    L0 = np.hstack([red.L_0p, red.L_00])
    lsq = np.linalg.lstsq(L0[:, 5:], -L0[:, :5] @ phi, rcond=None)[0]
    np.testing.assert_allclose(full[red.zero_index], lsq, atol=1e-10)


def test_perturbed_zero_speed_converges_to_reduction():
    system, _ = _random_singular_system(2)
    form = characteristic_form(system)
    op, _ = reduce_singular(form, fourier_only(0), 0.5j)
    ref = np.sort_complex(np.linalg.eigvals(op.M))
    errs = []
    for eps in (1e-5, 1e-8):
        ad = form.A_diag[0].copy()
        ad[ad == 0] = eps
        T, Ti = form.T[0], form.T_inv[0]
        pert = HyperbolicSystem(A=Ti @ np.diag(ad) @ T, C=system.C)
        M = assemble_operator(characteristic_form(pert), fourier_only(0), 0.5j).M
        ev = np.linalg.eigvals(M)
        ev = ev[np.argsort(np.abs(ev))][:5]  # drop the stiff eigenvalue ~ 1/eps
        errs.append(max(np.abs(ev - r).min() for r in ref))
    assert errs[1] < errs[0]
    assert errs[1] <= 1e-6


def test_wall_node_reduction(shear_tb):
    tb = shear_euler(n_nodes=8, wall=True)
    op = tb.operator()
    assert op.reduction is not None
    assert op.n == 4 * 8 - 1
    rng = np.random.default_rng(0)
    phi = rng.standard_normal(op.n) + 0j
    assert op.reduction.residual(phi) <= 1e-10
    q = op.physical_state(phi)
    assert q.shape == (8, 4)
    assert abs(q[0, 2]) <= 1e-12  # v vanishes at the wall


def test_3d_uniform_euler_with_fourier_direction():
    tb = uniform_euler(dim=3, n_nodes=4)
    op = tb.operator()
    assert op.M.shape == (20, 20)
    assert (op.n_plus, op.n_minus) == (16, 4)


def test_bad_wavenumber_count(uniform_tb):
    from owns.system import assemble_operator as assemble

    with pytest.raises(ValueError):
        assemble(uniform_tb.form, uniform_tb.disc, 1j, omega_t=(1.0,))
