import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st

from admm_ilqr import geom
from admm_ilqr.errors import AntipodalPoints, NotTangent

vec3 = st.lists(st.floats(-1.0, 1.0), min_size=3, max_size=3)


def _unit(v):
    v = np.asarray(v, dtype=float)
    n = np.linalg.norm(v)
    assume(n > 1e-3)
    return v / n


@settings(max_examples=200, deadline=None)
@given(vec3, vec3)
def test_exp_log_roundtrip(a, b):
    x, y = _unit(a), _unit(b)
    assume(geom.sphere_distance(x, y) < np.pi - 1e-3)
    u = geom.sphere_log(x, y)
    assert abs(u @ x) < 1e-12
    assert np.linalg.norm(u) == pytest.approx(geom.sphere_distance(x, y), abs=1e-12)
    np.testing.assert_allclose(geom.sphere_exp(x, u), y, atol=1e-9)


@settings(max_examples=100, deadline=None)
@given(vec3, vec3)
def test_exp_stays_on_sphere(a, b):
    x = _unit(a)
    u = np.asarray(b) - (np.asarray(b) @ x) * x
    assert np.linalg.norm(geom.sphere_exp(x, u)) == pytest.approx(1.0, abs=1e-12)


def test_log_of_same_point_is_zero():
    x = np.array([0.0, 0.6, 0.8])
    np.testing.assert_array_equal(geom.sphere_log(x, x), np.zeros(3))


def test_log_near_identical_points_is_accurate():
    x = np.array([1.0, 0.0])
    y = np.array([np.cos(1e-9), np.sin(1e-9)])
    np.testing.assert_allclose(geom.sphere_log(x, y), [0.0, 1e-9], rtol=1e-6)


def test_sphere_errors():
    with pytest.raises(AntipodalPoints):
        geom.sphere_log([1.0, 0.0], [-1.0, 0.0])
    with pytest.raises(NotTangent):
        geom.sphere_exp([1.0, 0.0], [0.5, 0.0])
    with pytest.raises(ValueError):
        geom.sphere_log([2.0, 0.0], [1.0, 0.0])


def test_distance_quarter_turn():
    assert geom.sphere_distance([1, 0, 0], [0, 1, 0]) == pytest.approx(np.pi / 2)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(-2.0, 2.0), min_size=4, max_size=4), st.floats(0.01, 2.0))
def test_spd_log_exp_roundtrip(m, shift):
    M = np.array(m).reshape(2, 2)
    S = M @ M.T + shift * np.eye(2)
    np.testing.assert_allclose(geom.spd_exp(geom.spd_log(S)), S, atol=1e-9 * max(1.0, np.abs(S).max()))


def test_spd_log_of_diagonal():
    np.testing.assert_allclose(geom.spd_log(np.diag([1.0, np.e])), np.diag([0.0, 1.0]), atol=1e-15)


def test_spd_log_regularizes_singular():
    L, flag = geom.spd_log(np.diag([1.0, 0.0]), with_flag=True)
    assert flag and np.all(np.isfinite(L))


def test_spd_distance_properties():
    rng = np.random.default_rng(1)
    for _ in range(20):
        A0, B0, G = rng.normal(size=(3, 3, 3))
        A = A0 @ A0.T + 0.1 * np.eye(3)
        B = B0 @ B0.T + 0.1 * np.eye(3)
        assert geom.spd_distance_sq(A, A) == pytest.approx(0.0, abs=1e-18)
        assert geom.spd_distance_sq(A, B) == pytest.approx(geom.spd_distance_sq(B, A), rel=1e-8)
        # affine invariance
        G = G + 3 * np.eye(3)
        assert geom.spd_distance_sq(G @ A @ G.T, G @ B @ G.T) == pytest.approx(geom.spd_distance_sq(A, B), rel=1e-7)


def test_spd_inv_sqrt_rejects_indefinite():
    with pytest.raises(ValueError):
        geom.spd_inv_sqrt(np.diag([1.0, -1.0]))
