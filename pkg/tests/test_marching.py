import math

import numpy as np
import pytest

from owns.errors import BlowUp, NonpositiveAmplitude
from owns.filters import RecursionParamSet
from owns.marching import (
    StationSequence,
    check_scheme,
    march,
    n_factor,
    running_n_factor,
    track_params,
)
from owns.selection import minimal_set_ownsp
from owns.spectral import full_spectrum
from owns.system import operator_from_matrix
from owns.testbeds import uniform_euler


@pytest.fixture(scope="module")
def small():
    tb = uniform_euler(n_nodes=4)
    return tb, full_spectrum(tb.builder(), tb.s)


def constant_seq(tb, inlet, x):
    return StationSequence(x_grid=x, system_at=lambda _x: tb, inlet_state=inlet, s=tb.s)


# ---------------------------------------------------------------------------
# N-factor
# ---------------------------------------------------------------------------

def test_n_factor_constant_is_zero():
    assert n_factor(np.full(5, 3.0)) == 0.0


def test_n_factor_exponential_growth():
    x = np.linspace(0, 2, 21)
    assert n_factor(np.exp(x), x) == pytest.approx(2.0)


def test_n_factor_interior_maximum():
    assert n_factor([1.0, math.e, 1.0]) == pytest.approx(1.0)
    np.testing.assert_allclose(running_n_factor([1.0, math.e, 1.0]), [0.0, 1.0, 1.0])


def test_n_factor_rejects_bad_input():
    with pytest.raises(NonpositiveAmplitude):
        n_factor([1.0, 0.0, 2.0])
    with pytest.raises(ValueError):
        n_factor([1.0, 2.0], x_grid=[0.0])
    with pytest.raises(ValueError):
        n_factor([])


# ---------------------------------------------------------------------------
# validation
# ---------------------------------------------------------------------------

def test_check_scheme():
    check_scheme("ownsp", "propagator")
    with pytest.raises(ValueError):
        check_scheme("ownsr", "propagator")
    with pytest.raises(ValueError):
        check_scheme("ownsq", "midpoint")
    with pytest.raises(ValueError):
        check_scheme("ownsp", "euler")


def test_station_sequence_validation(small):
    tb, _ = small
    inlet = np.ones(16, complex)
    with pytest.raises(ValueError):
        constant_seq(tb, inlet, [0.0])
    with pytest.raises(ValueError):
        constant_seq(tb, inlet, [0.0, 1.0, 1.0])
    with pytest.raises(ValueError):
        constant_seq(tb, np.full(16, np.nan), [0.0, 1.0])


def test_zero_inlet_rejected(small):
    tb, _ = small
    with pytest.raises(ValueError):
        march(constant_seq(tb, np.zeros(16), [0.0, 1.0]))


# ---------------------------------------------------------------------------
# marches with constant coefficients
# ---------------------------------------------------------------------------

@pytest.mark.parametrize("flavor", ["exact", "ownsp"])
def test_upstream_inlet_is_filtered_out(small, flavor):
    tb, spec = small
    inlet = spec.V[:, spec.n_plus]
    xi = minimal_set_ownsp(spec)
    res = march(constant_seq(tb, inlet, np.linspace(0, 1, 5)), flavor=flavor, xi_strategy=xi)
    assert max(np.linalg.norm(s) for s in res.states) <= 1e-6


@pytest.mark.parametrize("scheme,tol", [("propagator", 1e-10), ("gauss4", 1e-6)])
def test_downstream_mode_follows_its_exponential(small, scheme, tol):
    tb, spec = small
    k = int(np.argmin(np.abs(spec.alpha_plus.imag)))  # least damped
    v, a = spec.V[:, k], spec.alpha_plus[k]
    x = np.linspace(0, 1, 21)
    res = march(constant_seq(tb, v, x), flavor="exact", step_scheme=scheme)
    assert np.linalg.norm(res.states[-1] - np.exp(1j * a * x[-1]) * v) <= tol


def test_tracking_keeps_parameters_on_identical_stations(small):
    tb, spec = small
    res = march(constant_seq(tb, spec.V[:, 0], np.linspace(0, 1, 4)), n_beta=3)
    first = res.xi_log[0]
    for xi in res.xi_log[1:]:
        np.testing.assert_allclose(xi.beta_plus, first.beta_plus, atol=1e-10)
        np.testing.assert_allclose(xi.beta_minus, first.beta_minus, atol=1e-10)
    assert res.refresh.tolist() == [True, False, False, False]
    assert res.n_regreedy == 0
    assert res.n_dense_eigs == spec.n_dense_eigs


def test_track_params_reselects_when_counts_change(small):
    tb, spec = small
    xi = RecursionParamSet(spec.alpha_plus[:2], spec.alpha_minus[:2])
    tr = track_params(xi, spec, (1, 1), (spec.n_plus, spec.n_minus))
    assert tr.refreshed and tr.xi.n_beta == 2 and tr.xi.origin == "greedy"
    with pytest.raises(ValueError):
        track_params(xi, spec.operator, (1, 1), (2, 2))


def test_rows_and_diagnostics(small):
    tb, spec = small
    x = np.linspace(0, 0.5, 3)
    res = march(constant_seq(tb, spec.V[:, 0], x), n_beta=2, diagnose=True, component=0)
    rows = list(res.rows())
    assert [r["x"] for r in rows] == list(x)
    assert set(rows[0]) == {"x", "amplitude", "n_factor_running", "refresh_flag", "j_ownsp",
                            "j_ownsr", "wall_ms"}
    assert rows[0]["wall_ms"] is None
    assert np.all(np.isfinite(res.j_ownsp))
    assert len(res.cost_log) == 3


def test_ownsr_march_runs(small):
    tb, spec = small
    res = march(constant_seq(tb, spec.V[:, 0], np.linspace(0, 0.5, 3)), flavor="ownsr",
                n_beta=spec.n_minus, step_scheme="gauss4")
    assert np.isfinite(res.n_factor)


def test_blowup_reports_partial_result():
    # a single downstream mode growing like exp(100 x)
    M = np.array([[100.0 + 0j]])
    seq = StationSequence(x_grid=np.linspace(0, 1, 11),
                          system_at=lambda _x: (lambda s: operator_from_matrix(M, [1], s)),
                          inlet_state=np.ones(1), s=0j)
    xi = RecursionParamSet([1.0j], [-1.0j])
    with pytest.raises(BlowUp) as exc:
        march(seq, xi_strategy=xi, step_scheme="propagator")
    assert exc.value.station == 3
    assert len(exc.value.partial.states) == 3
