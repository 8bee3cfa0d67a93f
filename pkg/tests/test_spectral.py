import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from owns.errors import ClassificationAmbiguous, NoConvergence, UnresolvedPairing
from owns.spectral import (
    DOWNSTREAM,
    UPSTREAM,
    classify_briggs,
    eig_alpha,
    full_spectrum,
    greedy_match,
    nearest_eigenpairs,
    normalize_columns,
    spectrum_from_matrix,
)
from owns.testbeds import uniform_euler


def test_uniform_euler_counts(uniform_spec):
    assert (uniform_spec.n_plus, uniform_spec.n_minus) == (24, 8)
    assert uniform_spec.n_plus + uniform_spec.n_minus == uniform_spec.n


def test_shear_counts_and_residual(shear_spec):
    assert (shear_spec.n_plus, shear_spec.n_minus) == (30, 34)
    assert shear_spec.residual() <= 1e-8 * max(1.0, shear_spec.cond_V)
    # downstream columns first
    assert np.all(shear_spec.labels[:30] == DOWNSTREAM)
    assert np.all(shear_spec.labels[30:] == UPSTREAM)


def test_counts_follow_characteristics(uniform_tb, uniform_spec):
    form = uniform_tb.form
    nodes = uniform_tb.n_nodes
    assert uniform_spec.n_plus == nodes * form.n_plus
    assert uniform_spec.n_minus == nodes * form.n_minus


def test_supersonic_has_no_upstream_modes():
    tb = uniform_euler(u=1.5, n_nodes=4)
    spec = full_spectrum(tb.builder(), tb.s)
    assert spec.n_minus == 0
    assert spec.n_plus == spec.n


def test_toy_diagonal_labels():
    # M v = i alpha v: alpha = -i lambda, so lambda -> -eta gives Im(alpha) -> +inf
    M = np.diag([0.1j, -0.2j])
    spec = spectrum_from_matrix(M, eta_direction=np.diag([-1.0, 1.0]))
    assert spec.n_plus == 1 and spec.n_minus == 1
    assert spec.alpha_plus[0] == pytest.approx(0.1)
    assert spec.alpha_minus[0] == pytest.approx(-0.2)


def test_classification_stable_under_eta_doubling(shear_tb, shear_spec):
    doubled = full_spectrum(shear_tb.builder(), shear_tb.s, eta_large=2 * shear_spec.eta_used)
    np.testing.assert_allclose(doubled.alphas, shear_spec.alphas, atol=1e-10)
    np.testing.assert_array_equal(doubled.labels, shear_spec.labels)


def test_classification_same_at_1e3_and_1e4(shear_tb):
    a = full_spectrum(shear_tb.builder(), shear_tb.s, eta_large=1e3)
    b = full_spectrum(shear_tb.builder(), shear_tb.s, eta_large=1e4)
    np.testing.assert_array_equal(a.labels, b.labels)
    np.testing.assert_allclose(a.alphas, b.alphas, atol=1e-10)


def test_classify_briggs_sign_test():
    labels = classify_briggs(np.array([0.1, 0.2]), np.array([500j, -400j]))
    np.testing.assert_array_equal(labels, [DOWNSTREAM, UPSTREAM])


def test_classify_briggs_weak_mode_is_ambiguous():
    with pytest.raises(ClassificationAmbiguous):
        classify_briggs(np.array([0.1, 0.2]), np.array([500j, 1j]))


def test_classify_briggs_length_mismatch():
    with pytest.raises(UnresolvedPairing):
        classify_briggs(np.array([0.1]), np.array([500j, 1j]))


def test_eigenvectors_are_normalized(uniform_spec):
    V = uniform_spec.V
    np.testing.assert_allclose(np.linalg.norm(V, axis=0), 1.0, atol=1e-12)
    first = V[np.argmax(np.abs(V) > 1e-8, axis=0), np.arange(V.shape[1])]
    assert np.all(np.abs(first.imag) <= 1e-12) and np.all(first.real > 0)


@settings(max_examples=25, deadline=None)
@given(st.integers(min_value=0, max_value=2**31 - 1))
def test_greedy_match_is_a_bijection(seed):
    rng = np.random.default_rng(seed)
    a = rng.standard_normal(7) + 1j * rng.standard_normal(7)
    perm = rng.permutation(7)
    b = a[perm] + 1e-9
    got = greedy_match(a, b)
    assert sorted(got) == list(range(7))
    np.testing.assert_allclose(b[got], a + 1e-9)


def test_eig_alpha_convention():
    M = np.diag([2j, -1.0])
    alphas, V = eig_alpha(M)
    for a, v in zip(alphas, V.T):
        np.testing.assert_allclose(M @ v, 1j * a * v, atol=1e-14)


def test_nearest_unchanged_station_returns_shifts(shear_spec):
    shifts = shear_spec.alphas[[0, 5, 40]]
    res = nearest_eigenpairs(shear_spec.M, shifts)
    np.testing.assert_allclose(res.alphas, shifts, atol=1e-10)
    assert not res.duplicates.any()


def test_nearest_after_small_perturbation(shear_spec):
    rng = np.random.default_rng(7)
    M = shear_spec.M + 1e-6 * rng.standard_normal(shear_spec.M.shape)
    shifts = shear_spec.alphas[::9]
    res = nearest_eigenpairs(M, shifts)
    assert np.abs(res.alphas - shifts).max() <= 1e-4
    dense = np.linalg.eigvals(M) / 1j
    for a in res.alphas:
        assert np.abs(dense - a).min() <= 1e-9 * np.abs(dense).max()
    normM = np.linalg.norm(M, 2)
    for a, v in zip(res.alphas, res.vectors.T):
        assert np.linalg.norm(M @ v - 1j * a * v) <= 1e-8 * normM


def test_nearest_clustered_shifts_flag_duplicates(shear_spec):
    a = shear_spec.alphas[3]
    res = nearest_eigenpairs(shear_spec.M, [a + 1e-7, a - 1e-7])
    np.testing.assert_allclose(res.alphas, [a, a], atol=1e-9)
    assert res.duplicates.all()


def test_nearest_requires_shifts(shear_spec):
    with pytest.raises(ValueError):
        nearest_eigenpairs(shear_spec.M, [])


def test_nearest_no_convergence_names_shift():
    # a rotation has a complex pair equidistant from a real shift: inverse iteration stalls
    M = np.array([[0.0, 1.0], [-1.0, 0.0]])
    with pytest.raises(NoConvergence) as exc:
        nearest_eigenpairs(M, [0.0], max_iter=5)
    assert exc.value.shift == 0
    res = nearest_eigenpairs(M, [0.0], max_iter=5, dense_fallback=True)
    assert abs(abs(res.alphas[0]) - 1.0) <= 1e-12


def test_normalize_single_vector():
    v = normalize_columns(np.array([0.0, -2.0j, 1.0]))
    assert np.linalg.norm(v) == pytest.approx(1.0)
    assert v[1].real > 0 and abs(v[1].imag) < 1e-15
