import numpy as np
import pytest

from mwkb.errors import EvaluationError, ExpressionError, ScenarioError
from mwkb.expressions import parse_expression
from mwkb.hamiltonian_model import (
    check_derivatives,
    free_particle,
    gaussian_symbol_data,
    hamiltonian_from_callables,
    hamiltonian_from_expression,
    harmonic_oscillator,
    initial_data_from_expressions,
    pendulum,
    quadratic_hamiltonian,
    quartic_oscillator,
)


def test_harmonic_oscillator_eval():
    value, grad, hess = harmonic_oscillator().eval(0.0, np.array([1.0, 0.0]))
    assert value == 0.5
    np.testing.assert_array_equal(grad, [1.0, 0.0])
    np.testing.assert_array_equal(hess, np.eye(2))


def test_free_particle_eval():
    H = free_particle()
    assert H.value(0.0, np.array([3.0, 2.0])) == 2.0
    np.testing.assert_array_equal(H.grad(0.0, np.array([3.0, 2.0])), [0.0, 2.0])


def test_quadratic_value_is_exact():
    M = np.array([[2.0, 0.5], [0.5, 1.0]])
    H = quadratic_hamiltonian(M, [0.3, -0.1])
    x = np.array([0.7, -1.1])
    assert H.value(0.0, x) == pytest.approx(0.5 * x @ M @ x + x @ [0.3, -0.1], abs=1e-15)
    np.testing.assert_array_equal(H.hess(0.0, x), M)
    assert H.is_quadratic


def test_quadratic_rejects_asymmetric():
    with pytest.raises(ScenarioError):
        quadratic_hamiltonian([[1.0, 0.2], [0.0, 1.0]])


@pytest.mark.parametrize("H", [quartic_oscillator(0.1), pendulum(), harmonic_oscillator()])
def test_derivatives_match_finite_differences(H):
    probes = np.random.default_rng(0).normal(size=(10, 2))
    assert check_derivatives(H, probes) < 1e-5


def test_expression_classification():
    assert hamiltonian_from_expression("p^2/2 + 2*q^2 + q").is_quadratic
    assert not hamiltonian_from_expression("p^2/2 + q^4").is_quadratic
    H = hamiltonian_from_expression("p^2/2 + q^2/2 + f*cos(w*t)*q", params={"f": 0.3, "w": 1.3})
    assert H.time_dependent and H.is_quadratic and H.is_separable


def test_expression_language_is_restricted():
    with pytest.raises(ExpressionError):
        parse_expression("__import__('os')", 1)
    with pytest.raises(ExpressionError):
        parse_expression("q.real", 1)
    with pytest.raises(ExpressionError):
        parse_expression("unknown_name * q", 1)


def test_non_finite_evaluation_reports_point():
    H = hamiltonian_from_expression("p^2/2 + 1/q")
    with pytest.raises(EvaluationError) as info:
        H.value(0.0, np.array([0.0, 1.0]))
    assert "x=" in str(info.value)


def test_callables_checked_against_finite_differences():
    def value(t, x):
        return 0.5 * np.sum(x ** 2, axis=-1)

    def grad(t, x):
        return 2.0 * x  # wrong by a factor two

    def hess(t, x):
        return np.broadcast_to(np.eye(2), x.shape[:-1] + (2, 2))

    with pytest.raises(ScenarioError):
        hamiltonian_from_callables(1, value, grad, hess)


def test_contraction_horizon():
    assert pendulum().contraction_horizon() == pytest.approx(np.log(1.5))
    assert quartic_oscillator(0.1).contraction_horizon() == 0.0


def test_initial_data_gradients():
    data = initial_data_from_expressions("exp(-q^2 - p^2)", "0.3*q^2*p + sin(p)")
    x = np.array([0.4, -0.7])
    h = 1e-6
    fd = [(data.phase(x + h * e) - data.phase(x - h * e)) / (2 * h) for e in np.eye(2)]
    np.testing.assert_allclose(data.phase_grad(x), fd, rtol=1e-7)
    assert not data.zero_phase
    assert initial_data_from_expressions("1", "0").zero_phase


def test_gaussian_symbol_data():
    d = gaussian_symbol_data([0.5, 0.0], [1.0, 2.0], 2.0, quad=[[0.2, 0.1], [0.1, 0.0]], lin=[0.0, 1.0])
    x = np.array([1.5, 2.0])
    assert d.amplitude(x) == pytest.approx(2.0 * np.exp(-0.5 * (1.0 + 1.0)))
    y = x - [0.5, 0.0]
    assert d.phase(x) == pytest.approx(0.5 * y @ [[0.2, 0.1], [0.1, 0.0]] @ y + y[1])
