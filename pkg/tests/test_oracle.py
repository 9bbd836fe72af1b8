import numpy as np
import pytest

from admm_ilqr import oracle
from admm_ilqr.chain import chain_preset


def test_config_validation():
    with pytest.raises(ValueError):
        oracle.OracleConfig(fd_step=0.0)
    with pytest.raises(ValueError):
        oracle.OracleConfig(grid_resolution=-1.0)
    with pytest.raises(ValueError):
        oracle.OracleConfig(trials=0)
    a, b = oracle.OracleConfig(seed=3).rng(), oracle.OracleConfig(seed=3).rng()
    assert a.uniform() == b.uniform()


def test_fd_gradient_of_quadratic():
    A = np.array([[2.0, 0.5], [0.5, 1.0]])
    x = np.array([0.3, -0.7])
    np.testing.assert_allclose(oracle.fd_gradient(lambda v: v @ A @ v, x), 2 * A @ x, atol=1e-8)


def test_fd_gradient_rejects_non_finite():
    with pytest.raises(ValueError):
        oracle.fd_gradient(lambda v: np.sqrt(v[0]) if v[0] >= 0 else np.nan, np.array([0.0]))


def test_dp_lqr_scalar_closed_form():
    # one step: min q (x1 + b u - xd)^2 + r u^2 (plus the fixed first stage)
    u = oracle.dp_lqr(np.eye(1), np.eye(1), np.eye(1), 0.5 * np.eye(1), np.array([[0.0], [2.0]]), np.zeros(1))
    assert u[0, 0] == pytest.approx(2.0 / 1.5)


def test_dp_lqr_rejects_indefinite_r():
    with pytest.raises(ValueError):
        oracle.dp_lqr(np.eye(1), np.eye(1), np.eye(1), -np.eye(1), np.zeros((2, 1)), np.zeros(1))


def test_grid_project_ties_and_errors():
    inside = lambda P: np.abs(P[:, 0]) <= 1.0
    g = oracle.grid_project([0.0, 0.0], inside, [[-1.0, 1.0], [-1.0, 1.0]], 0.5)
    np.testing.assert_allclose(g, [0.0, 0.0])
    g = oracle.grid_project([0.25, 0.0], lambda P: np.ones(len(P), bool), [[0.0, 1.0], [0.0, 0.0]], 0.5)
    np.testing.assert_allclose(g, [0.0, 0.0])  # tie between 0 and 0.5 goes to the smaller
    with pytest.raises(ValueError):
        oracle.grid_project([0.0], lambda P: np.zeros(len(P), bool), [[0.0, 1.0]], 0.5)


def test_fk_transform_planar_straight():
    H = oracle.fk_transform(chain_preset("planar3"), np.zeros(3))
    np.testing.assert_allclose(H, [[1, 0, 3], [0, 1, 0], [0, 0, 1]], atol=1e-15)


def test_fk_transform_spatial_is_rigid():
    H = oracle.fk_transform(chain_preset("spatial7"), np.linspace(-1, 1, 7))
    np.testing.assert_allclose(H[:3, :3].T @ H[:3, :3], np.eye(3), atol=1e-12)
    np.testing.assert_allclose(H[3], [0, 0, 0, 1])
