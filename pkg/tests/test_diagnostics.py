import numpy as np
import pytest

from owns.diagnostics import (
    bound_values,
    designated_mode,
    evaluate_params,
    filtered_spectrum_check,
    mode_error,
    polynomial_residual_error,
    projection_error,
    run_study,
    scaled_polynomial_residual_error,
)
from owns.filters import RecursionParamSet, exact_projection, ownsr_beta_star
from owns.selection import greedy_select, minimal_set_ownsp, minimal_set_ownsr


def test_projection_error_of_exact_projection(shear_spec):
    assert projection_error(exact_projection(shear_spec), shear_spec) <= 1e-10


def test_projection_error_accepts_callables(uniform_spec):
    P = exact_projection(uniform_spec)
    assert projection_error(lambda v: P @ v, uniform_spec) == pytest.approx(
        projection_error(P, uniform_spec))
    with pytest.raises(ValueError):
        projection_error(P, uniform_spec, n_trials=0)


def test_mode_error_of_zero_matrix_is_one():
    assert mode_error(np.zeros((3, 3)), np.array([1.0, 2.0, 3.0])) == pytest.approx(1.0)


def test_designated_mode_is_most_unstable(shear_spec):
    k = designated_mode(shear_spec)
    assert shear_spec.alpha_plus[k].imag == shear_spec.alpha_plus.imag.min()


def test_bound_of_minimal_set_vanishes(shear_spec):
    rep = bound_values(shear_spec, minimal_set_ownsp(shear_spec), "ownsp")
    assert rep.bound <= 1e-12 and rep.precondition_ok
    rep_r = bound_values(shear_spec, minimal_set_ownsr(shear_spec), "ownsr")
    assert rep_r.bound <= 1e-12 and rep_r.precondition_ok


def test_bound_guard_fails_for_equal_pairs(shear_spec):
    b = np.array([0.3 + 0.1j])
    rep = bound_values(shear_spec, RecursionParamSet(b, b), "ownsp")
    assert not rep.precondition_ok
    with pytest.raises(ValueError):
        bound_values(shear_spec, RecursionParamSet(b, b), "other")


def test_ownsp_bound_below_ownsr_bound_when_gains_small(shear_spec):
    xi = greedy_select(shear_spec, 20)
    p = bound_values(shear_spec, xi, "ownsp")
    r = bound_values(shear_spec, xi, "ownsr")
    assert p.F_pp_norm < 1 and p.F_mm_inv_norm < 1
    # product of two gains below one sits under the larger gain
    assert p.F_pp_norm * p.F_mm_inv_norm <= max(r.F_pp_norm, r.F_mm_inv_norm)


def test_residual_single_pair_is_rounding_only():
    xi = RecursionParamSet([0.4 + 1j], [-0.2 - 0.7j])
    bs = ownsr_beta_star(xi).roots
    assert polynomial_residual_error(xi, bs) <= 1e-14
    assert scaled_polynomial_residual_error(xi, bs) <= 1e-14


def test_residual_detects_wrong_roots():
    xi = RecursionParamSet([0.4 + 1j], [-0.2 - 0.7j])
    assert polynomial_residual_error(xi, np.array([5.0 + 0j])) > 0.1


def test_filtered_check_of_exact_projection(uniform_tb, uniform_spec):
    rep = filtered_spectrum_check(uniform_spec, None, "exact", builder=uniform_tb.builder())
    assert rep.stable and rep.n_flagged == 0
    assert np.all(rep.labels[uniform_spec.n_plus:] == 0)


def test_filtered_check_needs_builder(uniform_spec):
    with pytest.raises(ValueError):
        filtered_spectrum_check(uniform_spec, None, "exact")


def test_filtered_check_ownsp_minimal_is_stable(uniform_tb, uniform_spec):
    rep = filtered_spectrum_check(uniform_spec, minimal_set_ownsp(uniform_spec), "ownsp",
                                  builder=uniform_tb.builder())
    assert rep.stable


def test_evaluate_params_record(uniform_spec):
    rec = evaluate_params(uniform_spec, minimal_set_ownsr(uniform_spec), "ownsr")
    assert rec.J == 0.0 and rec.proj_err <= 1e-8 and rec.mode_err <= 1e-8
    assert rec.beta_star_residual <= 1e-6
    assert set(rec.row()) >= {"n_beta", "selector", "method", "J", "proj_err"}


def test_run_study_order_independent_of_threads(uniform_spec):
    grid = (1, 3, 5, 8)
    a = run_study(uniform_spec, grid, "ownsp", "greedy", n_starts=2)
    b = run_study(uniform_spec, grid, "ownsp", "greedy", n_starts=2, n_jobs=3)
    assert [r.n_beta for r in b.records] == list(grid)
    assert [r.J for r in a.records] == [r.J for r in b.records]


def test_run_study_validation(uniform_spec):
    with pytest.raises(ValueError):
        run_study(uniform_spec, (3, 2), "ownsp", "greedy")
    with pytest.raises(ValueError):
        run_study(uniform_spec, (1,), "ownsp", "random")
    minimal = run_study(uniform_spec, (1,), "ownsp", "minimal")
    assert len(minimal.records) == 1 and minimal.records[0].J == 0.0
