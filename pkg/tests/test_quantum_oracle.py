import numpy as np
import pytest

from mwkb.errors import ScenarioError
from mwkb.hamiltonian_model import driven_oscillator, free_particle, harmonic_oscillator, quartic_oscillator
from mwkb.quantum_oracle import (
    SplitStepConfig,
    coherent_state,
    density_symbols,
    energy_expectation,
    exact_rho_symbol,
    exact_density_symbol,
    husimi_of_symbol,
    husimi_propagator,
    propagate,
    propagator_matrix,
    step_convergence,
)
from mwkb.weyl_calculus import WeylGrid, wigner_transform

Q = np.linspace(-8, 8, 256, endpoint=False)


def ho_config(hbar=1.0, dt=1e-3):
    return SplitStepConfig.from_hamiltonian(harmonic_oscillator(), Q, hbar, dt)


def test_config_validation():
    with pytest.raises(ScenarioError):
        SplitStepConfig(Q, 1.0, -1.0, lambda t, q: q)
    with pytest.raises(ScenarioError):
        SplitStepConfig(Q[:4], 1.0, 1e-3, lambda t, q: q)


def test_step_count():
    cfg = ho_config(dt=0.1)
    assert cfg.steps(1.0) == (10, pytest.approx(0.1))
    assert cfg.steps(-0.25)[0] == 3
    assert cfg.steps(0.0) == (0, 0.0)


def test_ground_state_energy_and_phase():
    cfg = ho_config(hbar=0.5)
    psi = coherent_state(Q, (0.0, 0.0), 0.5)
    assert energy_expectation(psi, cfg) == pytest.approx(0.25, abs=1e-12)
    assert husimi_propagator(cfg, 1.2, [[0.0, 0.0]])[0] == pytest.approx(np.exp(-0.6j), abs=1e-6)


def test_coherent_state_follows_classical_orbit():
    cfg = ho_config()
    psi = propagate(coherent_state(Q, (1.0, 0.5), 1.0), cfg, 0.9)
    dens = np.abs(psi.values) ** 2
    assert np.sum(dens) * cfg.dq == pytest.approx(1.0, abs=1e-10)
    mean_q = np.sum(Q * dens) / np.sum(dens)
    assert mean_q == pytest.approx(np.cos(0.9) + 0.5 * np.sin(0.9), abs=1e-6)


def test_strang_converges_to_spectral():
    cfg = SplitStepConfig.from_hamiltonian(quartic_oscillator(0.1), np.linspace(-6, 6, 96, endpoint=False),
                                           0.5, 5e-4)
    psi = coherent_state(cfg.q, (1.0, 0.0), 0.5).values
    exact = propagator_matrix(cfg, 1.0, method="spectral") @ psi
    err = [np.max(np.abs(propagator_matrix(cfg.with_dt(dt), 1.0) @ psi - exact)) for dt in (5e-4, 2.5e-4)]
    assert err[1] < 1e-4
    assert err[0] / err[1] == pytest.approx(4.0, rel=0.1)
    assert step_convergence(coherent_state(cfg.q, (1.0, 0.0), 0.5), cfg, 1.0) < 1e-4


def test_spectral_rejects_time_dependent_potentials():
    cfg = SplitStepConfig.from_hamiltonian(driven_oscillator(0.3, 1.3), Q, 1.0, 1e-3)
    with pytest.raises(ScenarioError):
        propagator_matrix(cfg, 1.0, method="spectral")
    with pytest.raises(ScenarioError):
        propagator_matrix(cfg, 1.0, method="leapfrog")


def test_density_symbols_match_single_time_propagation():
    cfg = SplitStepConfig.from_hamiltonian(quartic_oscillator(0.1), np.linspace(-8, 8, 128, endpoint=False),
                                           1.0, 1e-3)
    rho0 = wigner_transform(coherent_state(cfg.q, (0.5, 0.3), 1.0))
    batch = density_symbols(rho0, cfg, [0.4, -0.2, 0.8], method="spectral")
    for g, t in zip(batch, [0.4, -0.2, 0.8]):
        one = exact_density_symbol(rho0, cfg, t, method="spectral")
        np.testing.assert_allclose(g.values, one.values, atol=1e-10)
        assert g.t == t


def test_husimi_of_ground_state_symbol():
    W = WeylGrid(-8, 8, 256, 1.0)
    g = W.symbol_grid(W.sample(lambda X: 2 * np.exp(-np.sum(X ** 2, axis=-1))))
    assert husimi_of_symbol(g, [[0.0, 0.0]])[0].real == pytest.approx(1.0, abs=1e-6)
    # away from the origin the smoothed symbol is exp(-|x|^2 / (2 hbar))
    assert husimi_of_symbol(g, [[1.0, 0.5]])[0].real == pytest.approx(np.exp(-1.25 / 2), abs=1e-6)


def test_free_gaussian_spreads_as_closed_form():
    q = np.linspace(-10, 10, 256, endpoint=False)
    cfg = SplitStepConfig.from_hamiltonian(free_particle(), q, 1.0, 1e-3)
    t = 1.0
    psi = propagate(coherent_state(q, (0.0, 0.5)), cfg, t)
    ref = np.pi ** -0.25 / np.sqrt(1 + 1j * t) * np.exp(-(q - 0.5 * t) ** 2 / (2 * (1 + 1j * t))
                                                        + 0.5j * q - 0.125j * t)
    np.testing.assert_allclose(psi.values, ref, atol=1e-8)


def test_zero_time_is_identity():
    psi = coherent_state(Q, (0.3, -0.2))
    np.testing.assert_array_equal(propagate(psi, ho_config(), 0.0).values, psi.values)


def test_coherent_wigner_rotates_rigidly():
    cfg = ho_config(dt=2.5e-4)
    t = 1.1
    g = exact_rho_symbol(coherent_state(Q, (1.0, 0.5)), cfg, t)
    c = np.array([np.cos(t) * 1.0 + np.sin(t) * 0.5, -np.sin(t) * 1.0 + np.cos(t) * 0.5])
    Qg, Pg = np.meshgrid(*g.axes, indexing="ij")
    ref = 2 * np.exp(-((Qg - c[0]) ** 2 + (Pg - c[1]) ** 2))
    np.testing.assert_allclose(g.values, ref, atol=1e-7)


def test_norm_energy_and_step_halving():
    q = np.linspace(-10, 10, 256, endpoint=False)
    cfg = SplitStepConfig.from_hamiltonian(harmonic_oscillator(), q, 1.0, 2.5e-4)
    psi0 = coherent_state(q, (1.0, 0.5))
    psi = propagate(psi0, cfg, 1.0)
    assert abs(psi.norm() - psi0.norm()) < 1e-10
    e0, e1 = energy_expectation(psi0, cfg), energy_expectation(psi, cfg)
    assert abs(e1 - e0) / e0 < 1e-6
    assert step_convergence(psi0, cfg, 1.0) < 1e-8
