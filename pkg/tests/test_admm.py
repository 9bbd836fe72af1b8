from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from admm_ilqr import oracle
from admm_ilqr.admm import (
    FEAS_TOL,
    ConstraintSet,
    OrientedBox,
    SolverSettings,
    consensus_admm,
    dual_update,
    penalty_weights,
    project_affine,
    project_box,
    project_oriented_box,
    residuals,
    solve,
    z_update,
)
from admm_ilqr.chain import rot2, rot_x, rot_z
from admm_ilqr.costs import CostTerm
from admm_ilqr.scenario import get_preset, to_problem

coord = st.floats(-3.0, 3.0, allow_nan=False)
pt2 = st.lists(coord, min_size=2, max_size=2).map(np.array)
pt3 = st.lists(coord, min_size=3, max_size=3).map(np.array)


def _box2(yaw=0.4):
    return OrientedBox(np.array([0.5, -0.2]), rot2(yaw), np.array([0.7, 0.1]))


@settings(max_examples=200, deadline=None)
@given(pt2, st.floats(-np.pi, np.pi))
def test_oriented_box_projection_properties(p, yaw):
    box = _box2(yaw)
    y = project_oriented_box(p, box)
    assert box.contains(y)
    np.testing.assert_array_equal(project_oriented_box(y, box), y)
    # nonexpansive and optimality (variational inequality) against the corners
    local = np.array([[sx, sy] for sx in (-1, 1) for sy in (-1, 1)]) * box.half_extents
    for c in box.center + local @ box.rotation.T:
        assert (p - y) @ (c - y) <= 1e-9


@settings(max_examples=100, deadline=None)
@given(pt3, pt3)
def test_oriented_box_projection_is_nonexpansive(a, b):
    box = OrientedBox(np.zeros(3), rot_z(0.3) @ rot_x(0.7), np.array([0.5, 0.2, 0.1]))
    pa, pb = project_oriented_box(a, box), project_oriented_box(b, box)
    assert np.linalg.norm(pa - pb) <= np.linalg.norm(a - b) + 1e-12


@settings(max_examples=200, deadline=None)
@given(pt2, st.floats(-1.0, 0.0), st.floats(0.05, 1.0))
def test_affine_projection_properties(x, l, width):
    a = np.array([0.6, -1.3])
    u = l + width
    y = project_affine(x, a, l, u)
    assert l - 1e-12 <= a @ y <= u + 1e-12
    np.testing.assert_array_equal(project_affine(y, a, l, u), y)
    # moves only along the normal
    d = y - x
    assert abs(d[0] * a[1] - d[1] * a[0]) < 1e-12


def test_affine_one_sided():
    y = project_affine([5.0, 0.0], [1.0, 0.0], -np.inf, 1.0)
    np.testing.assert_allclose(y, [1.0, 0.0])
    np.testing.assert_allclose(project_affine([-50.0, 0.0], [1.0, 0.0], -np.inf, 1.0), [-50.0, 0.0])
    with pytest.raises(ValueError):
        project_affine([0.0, 0.0], [0.0, 0.0], 0.0, 1.0)


@settings(max_examples=100, deadline=None)
@given(pt3)
def test_box_projection(v):
    lo, hi = np.array([-1.0, 0.0, 0.5]), np.array([1.0, 0.2, 2.0])
    y = project_box(v, lo, hi)
    assert np.all((y >= lo) & (y <= hi))
    np.testing.assert_array_equal(project_box(y, lo, hi), y)


def test_box_projection_bad_bounds():
    with pytest.raises(ValueError):
        project_box([0.0], [1.0], [0.0])


def test_projection_matches_grid_search():
    box = _box2()
    x = np.array([1.6, 0.9])
    y = project_oriented_box(x, box)
    feasible = lambda P, tol=FEAS_TOL: np.all(np.abs((P - box.center) @ box.rotation) <= box.half_extents + tol, axis=1)
    g = oracle.grid_project(x, feasible, np.stack([y - 0.05, y + 0.05], axis=1), 1e-3)
    assert np.linalg.norm(x - y) <= np.linalg.norm(x - g) + 1e-12


def test_oriented_box_validation():
    with pytest.raises(ValueError):
        OrientedBox(np.zeros(2), np.eye(2), np.array([1e-5, 1.0]))
    with pytest.raises(ValueError):
        OrientedBox(np.zeros(2), np.array([[1.0, 0.2], [0.0, 1.0]]), np.ones(2))


def test_intersection_uses_dykstra():
    cs = ConstraintSet(
        -np.ones(2), np.ones(2), _box2(0.0), (1,), ((np.array([1.0, 0.0]), -np.inf, 0.6),)
    )
    y = cs.project_position(np.array([2.0, 1.0]))
    np.testing.assert_allclose(y, [0.6, -0.1], atol=1e-7)


def test_z_update_projects_only_constrained_blocks():
    cs = ConstraintSet(-np.ones(2), np.ones(2), _box2(0.0), (1,))
    x_hat = np.full((3, 4), 5.0)
    u_hat = np.full((2, 2), 5.0)
    z_x, z_u = z_update(x_hat, u_hat, np.zeros_like(x_hat), np.zeros_like(u_hat), cs)
    np.testing.assert_array_equal(z_u, 1.0)
    np.testing.assert_array_equal(z_x[0], 5.0)
    np.testing.assert_array_equal(z_x[1, :2], 5.0)
    assert _box2(0.0).contains(z_x[1, 2:])


def test_dual_update_and_residuals():
    lam = dual_update(np.zeros(2), np.array([1.0, 2.0]), np.array([0.5, 2.0]))
    np.testing.assert_allclose(lam, [0.5, 0.0])
    r_p, r_d = residuals(np.ones((2, 2)), np.ones((1, 2)), np.zeros((2, 2)), np.ones((1, 2)), np.zeros((2, 2)), np.zeros((1, 2)))
    assert (r_p, r_d) == (4.0, 2.0)


def test_consensus_admm_toy():
    x, z, lam, hist = consensus_admm(lambda v: (3.0 + v) / 2.0, lambda v: np.minimum(v, 1.0), 1)
    assert z[0] == 1.0 and len(hist) <= 50
    assert hist[-1][1] <= 1e-4 and hist[-1][2] <= 1e-4
    # scaled dual times penalty equals the multiplier 2(x* - 3) with sign: lam ~ 2
    assert lam[0] == pytest.approx(2.0, abs=0.05)


def test_consensus_admm_unconstrained_minimum_inside():
    x, z, _, hist = consensus_admm(lambda v: (0.5 + v) / 2.0, lambda v: np.minimum(v, 1.0), 1)
    assert z[0] == pytest.approx(0.5, abs=1e-2) and len(hist) < 50


def test_penalty_weights_only_on_via_positions():
    p = to_problem(get_preset("fig3a-1"))
    Qr, Rr = penalty_weights(p)
    nonzero = np.argwhere(Qr.reshape(p.horizon + 1, -1) > 0)
    assert set(nonzero[:, 0]) == {p.t_pick}
    assert set(nonzero[:, 1]) == {3, 4}
    assert np.all(Rr == p.settings.r_r)


@pytest.fixture(scope="module")
def fig3a1_report():
    return solve(to_problem(get_preset("fig3a-1")))


def test_solve_meets_via_and_target(fig3a1_report):
    r = fig3a1_report
    assert r.status in ("converged", "max_iterations")
    assert r.constraints["via"][0]["consensus_inside"]
    assert r.constraints["via"][0]["nominal_distance"] < 1e-2
    assert r.constraints["final_position_error"] < 1e-2
    assert r.constraints["consensus_control_feasible"]
    assert r.outer_iterations <= 20


def test_solve_history_records(fig3a1_report):
    h = fig3a1_report.residual_history
    assert [e["k_i"] for e in h] == list(range(len(h)))
    assert all(1 <= e["ilqr_iterations"] <= 10 for e in h)
    assert all(c["alpha"] >= 0 for c in fig3a1_report.cost_history)


def test_solve_is_deterministic(fig3a1_report):
    again = solve(to_problem(get_preset("fig3a-1")))
    np.testing.assert_array_equal(again.trajectory.u, fig3a1_report.trajectory.u)


def test_solve_aborts_on_non_finite_cost():
    p = to_problem(get_preset("fig3a-1"))
    bad = replace(p, terms=(CostTerm("position", 1.0, frozenset({p.horizon}), {"target": np.array([np.nan, 0.0])}),))
    r = solve(bad)
    assert r.status == "aborted" and "non-finite" in r.message


def test_literal_inner_loop_can_stall():
    # with no minimum inner step, an already cheap augmented cost runs zero iLQR steps
    p = to_problem(get_preset("fig3a-1"))
    s = replace(p.settings, min_ilqr_iterations=0, c_max=1e9, k_max_admm=3)
    r = solve(replace(p, settings=s))
    assert all(e["ilqr_iterations"] == 0 for e in r.residual_history)
    assert not np.any(r.trajectory.u)


def test_settings_defaults():
    s = SolverSettings()
    assert (s.k_max_admm, s.k_max_ilqr, s.c_max, s.r_p_max, s.r_d_max) == (20, 10, 1.0, 1e-4, 1e-4)
