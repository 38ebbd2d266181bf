import numpy as np
import pytest

from mwkb.classical_flow import (
    flow,
    flow_batch,
    flowed_chord_action,
    jacobi_bound_check,
    quadratic_propagate,
)
from mwkb.errors import RunawayTrajectoryError, ScenarioError
from mwkb.hamiltonian_model import (
    driven_oscillator,
    free_particle,
    hamiltonian_from_expression,
    harmonic_oscillator,
    pendulum,
    quartic_oscillator,
)


def rotation(t):
    c, s = np.cos(t), np.sin(t)
    return np.array([[c, s], [-s, c]])


def test_oscillator_rotates_clockwise():
    traj = flow(harmonic_oscillator(), [1.0, 0.0], np.pi / 2)
    np.testing.assert_allclose(traj.end, [0.0, -1.0], atol=1e-9)
    np.testing.assert_allclose(traj.jacobi, rotation(np.pi / 2), atol=1e-9)


def test_free_particle_shear():
    traj = flow(free_particle(), [0.5, 2.0], 1.5)
    np.testing.assert_allclose(traj.end, [3.5, 2.0], atol=1e-10)
    np.testing.assert_allclose(traj.jacobi, [[1.0, 1.5], [0.0, 1.0]], atol=1e-10)
    # p . qdot integrates to p^2 t and H to p^2 t / 2
    assert traj.action == pytest.approx(4.0 * 1.5, abs=1e-9)
    assert traj.ham_integral == pytest.approx(0.5 * 4.0 * 1.5, abs=1e-9)


def test_backward_flow_inverts_forward():
    H = pendulum()
    x = flow(H, [0.3, 1.1], 2.0).end
    np.testing.assert_allclose(flow(H, x, 0.0, t0=2.0).end, [0.3, 1.1], atol=1e-8)


def test_pendulum_invariants():
    traj = flow(pendulum(), [0.4, 1.2], 5.0)
    assert traj.energy_drift(pendulum()) < 1e-7
    assert traj.symplecticity_defect() < 1e-8


def test_jacobi_growth_within_bound():
    H = pendulum()
    rep = jacobi_bound_check(flow(H, [0.1, 0.5], 2.0), H.c1)
    assert rep.ok


def test_batch_matches_single_trajectories():
    H = quartic_oscillator(0.1)
    X0 = np.random.default_rng(1).normal(size=(6, 2))
    batch = flow_batch(H, X0, 1.3)
    for x0, xt, G in zip(X0, batch.end, batch.jacobi):
        single = flow(H, x0, 1.3)
        np.testing.assert_allclose(xt, single.end, atol=1e-8)
        np.testing.assert_allclose(G, single.jacobi, atol=1e-7)


def test_quadratic_propagator_matches_integration():
    H = driven_oscillator(0.3, 1.3)
    P = quadratic_propagate(H, 0.2, 1.7)
    x = np.array([0.4, -0.3])
    np.testing.assert_allclose(P.apply(x), flow(H, x, 1.7, t0=0.2).end, atol=1e-8)
    np.testing.assert_allclose(P.inverse(P.apply(x)), x, atol=1e-12)


def test_quadratic_propagator_rejects_nonquadratic():
    with pytest.raises(ScenarioError):
        quadratic_propagate(quartic_oscillator(0.1), 0.0, 1.0)


def test_runaway_trajectory_is_reported():
    H = hamiltonian_from_expression("p^2/2 - q^4")
    with pytest.raises(RunawayTrajectoryError):
        flow(H, [2.0, 3.0], 5.0)


def test_chord_action_at_zero_time_is_straight_line_integral():
    # p dq along the straight chord is the mean momentum times the q increment
    x1, x2 = np.array([0.2, 0.3]), np.array([-0.5, 1.0])
    for H in (harmonic_oscillator(), pendulum()):
        action, a, b = flowed_chord_action(H, x1, x2, 0.0)
        assert action == pytest.approx(0.65 * -0.7, abs=1e-12)
        np.testing.assert_allclose([a, b], [x1, x2], atol=1e-12)


def test_chord_action_is_invariant_on_closed_loops():
    # the three chords of a triangle map to a closed curve with the same enclosed area
    H = quartic_oscillator(0.1)
    tri = np.array([[0.0, 0.0], [0.5, 0.1], [0.2, 0.6]])
    before = sum(flowed_chord_action(H, tri[i], tri[(i + 1) % 3], 0.0)[0] for i in range(3))
    after = sum(flowed_chord_action(H, tri[i], tri[(i + 1) % 3], 0.8)[0] for i in range(3))
    assert after == pytest.approx(before, abs=1e-9)
