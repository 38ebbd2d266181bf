import numpy as np
import pytest

from mwkb.classical_flow import flow_batch
from mwkb.hamiltonian_model import (
    free_particle,
    harmonic_oscillator,
    initial_data_from_expressions,
    pendulum,
    quartic_oscillator,
    zero_phase_data,
)
from mwkb.phase_geometry import AffineMap
from mwkb.symbol_grid import STATUS_CODES, grid_points
from mwkb.wkb_evolution import (
    additivity_check,
    caustic_times,
    covariance_check,
    evaluate_points,
    hj_residual_points,
    poincare_cartan_defect,
    quadratic_exact_rho,
    quadratic_exact_u,
    rho_semiclassical,
    single_sheet_phase,
    u_semiclassical,
)

AXES = (np.linspace(-2.0, 2.0, 9), np.linspace(-2.0, 2.0, 9))


def oscillator_u(t, X, hbar):
    """Weyl symbol of exp(-i t H / hbar) for H = (q^2 + p^2) / 2."""
    H = 0.5 * np.sum(X ** 2, axis=-1)
    return np.exp(-2j * np.tan(t / 2) * H / hbar) / np.cos(t / 2)


@pytest.mark.parametrize("t", [0.5, np.pi / 2, 2.5, 4.0])
def test_oscillator_propagator_symbol(t):
    hbar = 0.7
    g = u_semiclassical(harmonic_oscillator(), None, t, AXES, hbar)
    ref = oscillator_u(t, grid_points(AXES), hbar).reshape(g.shape)
    np.testing.assert_allclose(g.values, ref, atol=1e-8)
    exact = quadratic_exact_u(harmonic_oscillator(), 0.0, t, AXES, hbar)
    np.testing.assert_allclose(exact.values, ref, atol=1e-10)


def test_free_particle_propagator_symbol():
    g = u_semiclassical(free_particle(), None, 1.3, AXES, 0.5)
    P = grid_points(AXES)[:, 1].reshape(g.shape)
    np.testing.assert_allclose(g.values, np.exp(-1j * 1.3 * P ** 2 / (2 * 0.5)), atol=1e-9)


def test_half_period_points_are_flagged_caustic():
    g = u_semiclassical(harmonic_oscillator(), None, np.pi, AXES, 1.0)
    assert np.all(g.status == STATUS_CODES["caustic"])
    assert np.all(g.values == 0)


def test_heisenberg_transport_of_real_symbol():
    H = quartic_oscillator(0.1)
    amp = "exp(-((q-0.5)^2 + p^2))"
    data = initial_data_from_expressions(amp, "0")
    g = rho_semiclassical(H, data, 0.8, AXES, 0.3)
    X = grid_points(AXES)
    back = flow_batch(H, X, 0.0, t0=0.8, jacobian=False).end
    ref = np.exp(-((back[:, 0] - 0.5) ** 2 + back[:, 1] ** 2))
    np.testing.assert_allclose(g.values.reshape(-1), ref, atol=1e-8)


def test_semiclassical_matches_closed_form_rho():
    H = harmonic_oscillator()
    data = initial_data_from_expressions("exp(-(q^2+p^2)/2)", "0.1*q*p + 0.2*q")
    sc = rho_semiclassical(H, data, 1.0, AXES, 0.5)
    exact = quadratic_exact_rho(H, data, 0.0, 1.0, AXES, 0.5)
    np.testing.assert_allclose(sc.values, exact.values, atol=1e-8)


def test_caustic_time_of_oscillator():
    events = caustic_times(harmonic_oscillator(), "schrodinger", zero_phase_data(1), 2.0, 4.0,
                           np.array([[0.3, 0.1], [-0.5, 0.4]]))
    assert len(events) == 1
    assert events[0].t == pytest.approx(np.pi, abs=1e-6)


def test_poincare_cartan_identity():
    rng = np.random.default_rng(5)
    x1, x2 = rng.normal(size=(2, 10, 2))
    assert np.max(np.abs(poincare_cartan_defect(pendulum(), x1, x2, 1.3))) < 1e-8


@pytest.mark.parametrize("kind", ["schrodinger", "heisenberg"])
def test_additivity_identities(kind):
    H = pendulum()
    data = zero_phase_data(1) if kind == "schrodinger" else initial_data_from_expressions("1", "0.2*q*p")
    rep = additivity_check(H, data, kind, 0.15, 0.2, np.array([0.3, -0.2]))
    assert rep.conclusive
    assert rep.worst < 1e-8


def test_hamilton_jacobi_residual_of_oscillator_phase():
    def phase(t, X):
        return -2.0 * np.tan(t / 2) * 0.5 * np.sum(X ** 2, axis=-1)

    X = np.array([[0.4, -0.3], [1.0, 0.5]])
    res = hj_residual_points(harmonic_oscillator(), "schrodinger", phase, 0.7, X, 1e-4)
    assert np.max(np.abs(res)) < 1e-6


def test_single_sheet_phase_solves_hamilton_jacobi():
    H = quartic_oscillator(0.1)
    data = initial_data_from_expressions("1", "0.2*q*p")
    fn = single_sheet_phase(H, "heisenberg", data)
    X = np.array([[0.3, 0.2]])
    r1 = abs(hj_residual_points(H, "heisenberg", fn, 0.5, X, 1e-2)[0])
    r2 = abs(hj_residual_points(H, "heisenberg", fn, 0.5, X, 5e-3)[0])
    assert r2 < r1 / 3


def test_translation_covariance_of_oscillator():
    out = covariance_check(harmonic_oscillator(), initial_data_from_expressions("exp(-q^2)", "0.1*q*p"),
                           "heisenberg", AffineMap.translation([0.3, -0.2]), 0.6, np.array([[0.1, 0.2]]))
    assert max(out.values()) < 1e-8


def test_evaluate_points_reports_one_sheet_per_point():
    ev = evaluate_points(pendulum(), "heisenberg", zero_phase_data(1), 0.5, np.array([[0.1, 0.2], [0.0, 1.0]]))
    assert [len(v) for v in ev.values] == [1, 1]
    assert all(v[0].phase == 0.0 for v in ev.values)
