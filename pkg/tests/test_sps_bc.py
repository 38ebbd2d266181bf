import numpy as np
import pytest

from mwkb.bc_solver import (
    PointStatus,
    amplitude_bracket,
    constraint_involution_defect,
    midpoint_jacobian,
    midpoint_map,
    solve_points,
    solve_short_time,
)
from mwkb.errors import DimensionError
from mwkb.hamiltonian_model import (
    harmonic_oscillator,
    initial_data_from_expressions,
    pendulum,
    quartic_oscillator,
    zero_phase_data,
)
from mwkb.sps_dynamics import ProblemKind, extended_hamiltonian, from_left_right, sps_flow, to_left_right


def test_left_right_round_trip():
    x, y = np.array([0.3, -0.2]), np.array([1.0, 2.0])
    l, r = to_left_right(x, y)
    np.testing.assert_allclose(l, [0.3 - 1.0, -0.2 + 0.5])
    np.testing.assert_allclose(r, [0.3 + 1.0, -0.2 - 0.5])
    xb, yb = from_left_right(l, r)
    np.testing.assert_allclose(xb, x)
    np.testing.assert_allclose(yb, y)
    with pytest.raises(DimensionError):
        to_left_right(x, np.zeros(4))


def test_problem_kind_parse():
    assert ProblemKind.parse("Heisenberg") is ProblemKind.HEISENBERG
    assert ProblemKind.parse(ProblemKind.SCHRODINGER) is ProblemKind.SCHRODINGER


def test_extended_hamiltonian_values():
    H = harmonic_oscillator()
    x, y = np.array([0.5, 0.5]), np.array([0.4, 0.0])
    l, r = to_left_right(x, y)
    assert extended_hamiltonian(H, "schrodinger", x, y) == pytest.approx(H.value(0.0, l))
    assert extended_hamiltonian(H, "heisenberg", x, y) == pytest.approx(H.value(0.0, l) - H.value(0.0, r))


def test_heisenberg_flow_on_zero_section_is_classical():
    H = pendulum()
    st = sps_flow(H, "heisenberg", [0.3, 0.9], [0.0, 0.0], 1.2)
    assert np.max(np.abs(st.y)) < 1e-12
    from mwkb.classical_flow import flow
    np.testing.assert_allclose(st.x, flow(H, [0.3, 0.9], 1.2).end, atol=1e-8)


def test_schrodinger_flow_moves_left_point_only():
    H = quartic_oscillator(0.1)
    st = sps_flow(H, "schrodinger", [0.3, 0.1], [0.2, -0.4], 0.7)
    from mwkb.classical_flow import flow
    np.testing.assert_allclose(st.lt, flow(H, st.l0, 0.7).end, atol=1e-8)
    np.testing.assert_allclose(st.rt, st.r0, atol=1e-12)


def test_egorov_root_is_backward_flow():
    H = harmonic_oscillator()
    res = solve_points(H, "heisenberg", zero_phase_data(1), np.array([[1.0, 0.0]]), np.pi / 2)
    (pc,) = res
    assert pc.status is PointStatus.NONFOCAL
    (sheet,) = pc.sheets
    np.testing.assert_allclose(sheet.x0, [0.0, 1.0], atol=1e-9)
    assert sheet.detM == pytest.approx(1.0, abs=1e-9)
    assert sheet.maslov == 0


@pytest.mark.parametrize("t", [0.5, 1.5, 2.5])
def test_oscillator_propagator_determinant(t):
    H = harmonic_oscillator()
    (pc,) = solve_points(H, "schrodinger", zero_phase_data(1), np.array([[0.4, -0.3]]), t)
    (sheet,) = pc.sheets
    assert sheet.detM == pytest.approx((2 + 2 * np.cos(t)) / 4, abs=1e-9)
    np.testing.assert_allclose(midpoint_map(H, "schrodinger", zero_phase_data(1), sheet.x0, t), [0.4, -0.3],
                               atol=1e-9)


def test_oscillator_half_period_is_caustic():
    H = harmonic_oscillator()
    (pc,) = solve_points(H, "schrodinger", zero_phase_data(1), np.array([[0.4, -0.3]]), np.pi + 1e-3)
    assert pc.status is PointStatus.CAUSTIC


def test_short_time_agrees_with_general_solver():
    H = quartic_oscillator(0.1)
    phase0 = initial_data_from_expressions("exp(-q^2-p^2)", "0.2*q*p + 0.1*q^2")
    X = np.array([[0.5, 0.2], [-0.3, 0.8]])
    quick = solve_short_time(H, "heisenberg", phase0, X, 0.2)
    full = solve_points(H, "heisenberg", phase0, X, 0.2)
    for a, pc in zip(quick, full):
        assert len(pc.sheets) == 1
        np.testing.assert_allclose(a.x0, pc.sheets[0].x0, atol=1e-8)
        assert a.residual < 1e-8


def test_midpoint_jacobian_matches_finite_difference():
    H = pendulum()
    phase0 = initial_data_from_expressions("1", "0.3*q^2 - 0.1*p")
    x = np.array([0.2, 0.4])
    G = midpoint_jacobian(H, "schrodinger", phase0, x, 0.6)
    h = 1e-6
    fd = np.column_stack([(midpoint_map(H, "schrodinger", phase0, x + h * e, 0.6)
                           - midpoint_map(H, "schrodinger", phase0, x - h * e, 0.6)) / (2 * h) for e in np.eye(2)])
    np.testing.assert_allclose(G, fd, atol=1e-6)


def test_constraint_is_involutive_for_graphs():
    phase0 = initial_data_from_expressions("1", "sin(q)*p + q^3")
    X = np.random.default_rng(2).normal(size=(8, 2))
    assert constraint_involution_defect(phase0, X) < 1e-6


def test_amplitude_bracket_equals_midpoint_determinant():
    H = quartic_oscillator(0.1)
    assert amplitude_bracket(H, "heisenberg", zero_phase_data(1), np.array([0.3, 0.2]), 0.5) \
        == pytest.approx(1.0, abs=1e-6)
    phase0 = initial_data_from_expressions("1", "0.3*q^2 - 0.1*q*p")
    x = np.array([0.2, -0.4])
    det = np.linalg.det(midpoint_jacobian(H, "schrodinger", phase0, x, 0.4))
    assert amplitude_bracket(H, "schrodinger", phase0, x, 0.4) == pytest.approx(det, abs=1e-6)
