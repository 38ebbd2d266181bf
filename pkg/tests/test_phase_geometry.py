import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from mwkb.errors import ClosureError, DimensionError, ScenarioError
from mwkb.phase_geometry import (
    AffineMap,
    Loop,
    Segment,
    affine_apply,
    alternating_sum,
    chord_action,
    loop_area,
    polygon_loop,
    polygon_phase,
    polygon_vertices,
    wedge,
)

finite = st.floats(-10, 10, allow_nan=False, allow_infinity=False)


def test_wedge_values():
    assert wedge((1.0, 0.0), (0.0, 1.0)) == 1.0
    assert wedge((2.0, 3.0), (5.0, 7.0)) == -1.0
    assert wedge((1.5, -2.0), (1.5, -2.0)) == 0.0


def test_wedge_dimension_mismatch():
    with pytest.raises(DimensionError):
        wedge((1.0, 0.0), (1.0, 0.0, 0.0, 1.0))


@given(arrays(float, 4, elements=finite), arrays(float, 4, elements=finite))
def test_wedge_antisymmetric(x, y):
    assert wedge(x, y) == -wedge(y, x)


def test_polygon_phase_values():
    assert polygon_phase([(1, 0), (0, 1), (0, 0)]) == pytest.approx(2.0)
    assert polygon_phase([(0.3, 0.2)] * 5) == 0.0
    with pytest.raises(ScenarioError):
        polygon_phase([(0, 0), (1, 1)])


def test_polygon_phase_batch_axis():
    rng = np.random.default_rng(3)
    pts = rng.normal(size=(5, 7, 2))
    batch = polygon_phase(pts)
    assert batch.shape == (7,)
    assert batch[4] == pytest.approx(polygon_phase(pts[:, 4]), abs=1e-14)


def test_alternating_sum_values():
    np.testing.assert_array_equal(alternating_sum([(1, 0), (0, 1), (2, 2)]), [3, 1])
    np.testing.assert_array_equal(alternating_sum([(4, 5)]), [4, 5])
    np.testing.assert_array_equal(alternating_sum([(4, 5), (4, 5)]), [0, 0])


def test_chord_action_values():
    assert chord_action((0, 0), (1, 1)) == 0.5
    assert chord_action((0, 2), (4, 2)) == 8.0
    assert chord_action((1, 1), (1, 1)) == 0.0


@settings(max_examples=40)
@given(st.integers(3, 7), st.integers(0, 2**31 - 1))
def test_polygon_laws(N, seed):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(N, 2))
    a = rng.normal(size=2)
    P = polygon_phase(x)
    S = alternating_sum(x)
    even = 1.0 if N % 2 == 0 else 0.0
    scale = max(1.0, np.sum(np.abs(x)) ** 2)
    prev = polygon_phase(x[:-1]) if N > 3 else 2 * wedge(x[0], x[1])
    rec = prev + (-1) ** (N + 1) * 2 * wedge(x[-1], alternating_sum(x[:-1]))
    assert abs(P - rec) < 1e-12 * scale
    assert abs(polygon_phase(x + a) - (P - even * 2 * wedge(a, S))) < 1e-12 * scale
    assert abs(polygon_phase(-x) - P) < 1e-12 * scale
    assert abs(polygon_phase(x[::-1]) + P) < 1e-12 * scale
    # cyclic shift: invariant for odd N, shifted by 4 x1 ^ S_N for even N
    assert abs(polygon_phase(np.roll(x, -1, axis=0)) - P - even * 4 * wedge(x[0], S)) < 1e-12 * scale


def test_even_cyclic_invariance_on_closed_chains():
    rng = np.random.default_rng(8)
    x = rng.normal(size=(6, 2))
    x[-1] = x[-1] + alternating_sum(x)  # forces S_N = 0
    assert np.allclose(alternating_sum(x), 0)
    assert polygon_phase(np.roll(x, -1, axis=0)) == pytest.approx(polygon_phase(x), abs=1e-12)


@pytest.mark.parametrize("N", [3, 5, 7])
def test_polygon_area_matches_phase(N):
    mids = np.random.default_rng(N).normal(size=(N, 2))
    loop = polygon_loop(mids)
    assert loop.is_closed()
    assert loop_area(loop) == pytest.approx(polygon_phase(mids), abs=1e-12)
    verts = polygon_vertices(mids)
    np.testing.assert_allclose(0.5 * (verts + np.roll(verts, -1, axis=0)), mids, atol=1e-12)


def test_even_vertex_reconstruction_rejected():
    with pytest.raises(ScenarioError):
        polygon_vertices(np.zeros((4, 2)))


def test_loop_closure_error_and_degenerate_loop():
    open_loop = Loop([Segment.chord((0, 0), (1, 0)), Segment.chord((1, 0), (1, 1))])
    with pytest.raises(ClosureError) as info:
        loop_area(open_loop)
    assert info.value.gap == pytest.approx(np.sqrt(2))
    point = np.array([0.4, -0.1])
    assert loop_area(Loop([Segment.chord(point, point)] * 3)) == 0.0


def test_affine_examples():
    assert np.array_equal(AffineMap.identity(1).apply([0.3, 0.7]), [0.3, 0.7])
    np.testing.assert_array_equal(AffineMap.translation([1.0, 0.0]).apply([0.0, 0.0]), [-1.0, 0.0])
    rot = AffineMap.rotation(np.pi / 2)
    np.testing.assert_allclose(affine_apply(rot, [1.0, 0.0]), [0.0, -1.0], atol=1e-15)
    x = np.array([0.2, -1.3])
    np.testing.assert_allclose(rot.inverse_apply(rot.apply(x)), x, atol=1e-15)


def test_affine_rejects_non_symplectic():
    with pytest.raises(ScenarioError):
        AffineMap(np.diag([2.0, 1.0]), np.zeros(2))
