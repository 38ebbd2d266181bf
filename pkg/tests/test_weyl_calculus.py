import numpy as np
import pytest

from mwkb.checks import star_suite
from mwkb.errors import AliasingError, DimensionError
from mwkb.hamiltonian_model import harmonic_oscillator, initial_data_from_expressions, quartic_oscillator
from mwkb.wkb_evolution import evaluate_points
from mwkb.weyl_calculus import (
    WaveFunction,
    WeylGrid,
    pure_state_symbol,
    star_product,
    stationary_phase_compose,
    wigner_transform,
)


def ground_state(q, hbar):
    return WaveFunction(q, (np.pi * hbar) ** -0.25 * np.exp(-q ** 2 / (2 * hbar)), hbar)


@pytest.mark.parametrize("hbar", [1.0, 0.5])
def test_wigner_of_ground_state(hbar):
    q = np.linspace(-8, 8, 256, endpoint=False)
    g = wigner_transform(ground_state(q, hbar))
    Q, P = np.meshgrid(*g.axes, indexing="ij")
    np.testing.assert_allclose(g.values, 2 * np.exp(-(Q ** 2 + P ** 2) / hbar), atol=1e-12)
    W = WeylGrid.from_symbol_grid(g)
    assert W.trace(g.values).real == pytest.approx(1.0, abs=1e-12)


def test_kernel_symbol_round_trip():
    W = WeylGrid(-6, 6, 128, 0.8)
    rng = np.random.default_rng(0)
    K = rng.normal(size=(128, 128)) + 1j * rng.normal(size=(128, 128))
    np.testing.assert_allclose(W.symbol_to_kernel(W.kernel_to_symbol(K)), K, atol=1e-12)


def test_wigner_rejects_states_beyond_the_window():
    q = np.linspace(-4, 4, 64, endpoint=False)
    with pytest.raises(AliasingError):
        wigner_transform(ground_state(q - 3.5, 1.0))


def test_star_product_rejects_mixed_grids():
    Wa, Wb = WeylGrid(-4, 4, 64, 1.0), WeylGrid(-4, 4, 64, 0.5)
    a = Wa.symbol_grid(np.ones(Wa.shape))
    b = Wb.symbol_grid(np.ones(Wb.shape))
    with pytest.raises(DimensionError):
        star_product(a, b)


def test_star_suite_default_grid():
    m = star_suite()
    assert m["unit"] < 1e-10
    assert m["idempotence"] < 1e-6
    assert m["commutator"] < 1e-6
    assert m["associativity"] < 1e-10


def test_cubic_pure_state_chords():
    # s = q^3 / 3: the chord half-length solves v^2 / 4 = p - q^2 and the loop phase is -4/3 (p - q^2)^{3/2}
    axes = (np.linspace(-1, 1, 5), np.linspace(-0.5, 2.0, 6))
    sym = pure_state_symbol("1", "q^3/3", axes)
    Q, P = np.meshgrid(*axes, indexing="ij")
    inside = P - Q ** 2 > 1e-3
    assert np.all(sym.status[inside] == 0)
    assert np.all(sym.status[P - Q ** 2 < 0] == 2)
    np.testing.assert_allclose(sym.v[..., 0][inside], 2 * np.sqrt(np.clip(P - Q ** 2, 0, None))[inside], atol=1e-10)
    np.testing.assert_allclose(sym.S0[..., 0][inside], -4 / 3 * (P - Q ** 2)[inside] ** 1.5, atol=1e-10)
    np.testing.assert_allclose(sym.S0[..., 0][inside], sym.S0_direct[..., 0][inside], atol=1e-10)
    np.testing.assert_allclose(sym.prefactor[..., 0][inside], (sym.v[..., 0][inside] / 2) ** -0.5, rtol=1e-10)


@pytest.mark.parametrize("H", [harmonic_oscillator(), quartic_oscillator(0.1)])
def test_stationary_phase_composition(H):
    data = initial_data_from_expressions("exp(-(q^2+p^2)/2)", "0.1*q*p + 0.2*q")
    X = np.array([[0.3, -0.4], [1.0, 0.2]])
    comp = stationary_phase_compose(H, data, 0.3, X, 0.7)
    direct = evaluate_points(H, "heisenberg", data, 0.3, X, manifold=None).field(0.7)
    for c, d in zip(comp, direct):
        assert c.converged
        assert abs(c.value - d) < 1e-5
        assert c.det_identity_defect < 1e-6
