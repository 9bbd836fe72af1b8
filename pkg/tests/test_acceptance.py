"""The ten acceptance criteria, each reported as one PASS/FAIL line."""
import statistics
import time

import numpy as np
import pytest

from admm_ilqr import cli
from admm_ilqr.admm import consensus_admm, solve
from admm_ilqr.chain import chain_preset
from admm_ilqr.costs import stage_breakdown
from admm_ilqr.ocp import linearize, rollout
from admm_ilqr.oracle import OracleConfig
from admm_ilqr.scenario import get_preset, randomize_targets, to_problem, with_mode
from admm_ilqr.suites import geometry_suite, gradient_suite, lqr_suite, projection_suite


def test_c01_viapoint_with_range(verdict):
    sc = get_preset("fig3a-1")
    p = to_problem(sc)
    s = p.settings
    params_ok = (
        np.allclose(p.chain.geometry, 1.0)
        and np.allclose(2 * p.constraints.state_box.half_extents, (1.4, 0.2))
        and np.allclose(p.constraints.control_upper, 4.0)
        and np.allclose(p.constraints.control_lower, -4.0)
        and (p.dt, p.horizon, p.t_pick) == (0.01, 100, 50)
        and (s.q_r, s.r_r, s.control_weight) == (10.0, 1e-3, 1e-5)
        and (s.k_max_ilqr, s.k_max_admm, s.r_p_max, s.r_d_max) == (10, 20, 1e-4, 1e-4)
    )
    start = time.perf_counter()
    r = solve(p)
    elapsed = time.perf_counter() - start
    via = r.constraints["via"][0]
    r_p = r.residual_history[-1]["r_p"]
    err = r.constraints["final_position_error"]
    ok = (
        params_ok
        and r.status in ("converged", "max_iterations")
        and r.outer_iterations <= s.k_max_admm
        and via["consensus_inside"]
        and via["nominal_distance"] <= 1e-2
        and np.sqrt(r_p) <= 1e-2
        and err < 1e-2
        and elapsed < 60.0
    )
    verdict(
        "1 viapoint with range",
        ok,
        f"status {r.status}, via distance {via['nominal_distance']:.2e}, sqrt(r_p) {np.sqrt(r_p):.2e}, "
        f"final error {err:.2e}, {elapsed:.1f} s",
    )


def _scheduled(problem, chain, traj, kind):
    return sum(stage_breakdown(problem.terms, chain, traj.q[t], t).get(kind, 0.0) for t in range(problem.horizon + 1))


def test_c02_fig3a_variants(verdict):
    details, ok = [], True
    for i in range(1, 5):
        p = to_problem(get_preset(f"fig3a-{i}"))
        initial = rollout(p.chain, p.q0, np.zeros((p.horizon, p.chain.dof)), p.dt)
        r = solve(p)
        ok &= r.status != "aborted" and r.constraints["via"][0]["consensus_inside"]
        for kind in ("orientation", "direction"):
            if not any(t.kind == kind for t in p.terms):
                continue
            c0 = _scheduled(p, p.chain, initial, kind)
            c1 = _scheduled(p, r.chain, r.trajectory, kind)
            ratio = c1 / c0 if c0 > 0 else 0.0
            ok &= ratio < 1e-2
            details.append(f"{i}:{kind} {ratio:.1e}")
        details.append(f"{i}:{r.status}")
    verdict("2 fig3a variants", ok, ", ".join(details))


def test_c03_manipulability_comparison(verdict):
    base = get_preset("fig4-pickplace")
    alphas = {"none": [], "directional": []}
    for seed in range(10):
        for mode in alphas:
            r = solve(with_mode(randomize_targets(base, seed), mode))
            alphas[mode].append(r.manipulability["alpha"] if r.status != "aborted" else float("nan"))
    wins = sum(d > n for d, n in zip(alphas["directional"], alphas["none"]))
    med_n, med_d = statistics.median(alphas["none"]), statistics.median(alphas["directional"])
    gain = med_d / med_n - 1.0
    verdict(
        "3 manipulability comparison",
        wins >= 8 and gain >= 0.10,
        f"directional wins {wins}/10, median {med_d:.3f} vs {med_n:.3f} (+{100 * gain:.1f}%)",
    )


def test_c04_batch_lqr_vs_dp(verdict):
    res = lqr_suite(OracleConfig(trials=50))
    verdict("4 batch LQR vs DP", res.passed and res.elapsed_s < 5.0, f"{res.max_error:.2e}, {res.elapsed_s:.2f} s")


def test_c05_gradient_suite(verdict):
    res = gradient_suite(OracleConfig(trials=50, fd_step=1e-6))
    verdict("5 gradient suite", res.passed and res.elapsed_s < 30.0, f"{res.max_error:.2e}, {res.elapsed_s:.2f} s")


def test_c06_projection_suite(verdict):
    res = projection_suite(OracleConfig(trials=100, grid_resolution=1e-3))
    verdict("6 projection suite", res.passed, f"{res.max_error:.2e} over {res.trials} instances{res.detail}")


def test_c07_geometry_suite(verdict):
    res = geometry_suite(OracleConfig(), sphere_pairs=1000, spd_trials=100)
    verdict("7 geometry suite", res.passed, res.detail.strip())


def test_c08_convex_toy(verdict):
    rho = 1.0
    x, z, _, hist = consensus_admm(lambda v: (3.0 + rho * v) / (1.0 + rho), lambda v: np.minimum(v, 1.0), 1)
    k, r_p, r_d = hist[-1]
    ok = abs(z[0] - 1.0) <= 1e-3 and len(hist) <= 50 and r_p <= 1e-4 and r_d <= 1e-4
    verdict("8 convex toy", ok, f"z {z[0]:.6f} (x {x[0]:.6f}) after {len(hist)} iterations, r_p {r_p:.1e}, r_d {r_d:.1e}")


def test_c09_linearization_decay(verdict):
    rng = np.random.default_rng(9)
    worst = np.inf
    for trial in range(20):
        chain = chain_preset("planar3" if trial % 2 == 0 else "spatial7")
        T, dt = 15, 0.05
        q0 = rng.uniform(-1.0, 1.0, chain.dof)
        u = rng.normal(size=(T, chain.dof))
        du = 0.5 * rng.normal(size=(T, chain.dof))
        traj = rollout(chain, q0, u, dt)
        Su = linearize(chain, traj).Su

        def remainder(h):
            moved = rollout(chain, q0, u + h * du, dt)
            return np.linalg.norm(moved.x_flat() - traj.x_flat() - Su @ (h * du).ravel())

        worst = min(worst, remainder(1.0) / remainder(0.5))
    verdict("9 linearization decay", worst >= 3.5, f"smallest ratio {worst:.3f} over 20 trajectories")


def test_c10_determinism(verdict, tmp_path, capsys):
    files = ("trajectory.csv", "report.json", "history.csv", "ellipsoid.json")
    outs = []
    for run in ("a", "b"):
        out = tmp_path / run
        assert cli.main(["run", "--scenario", "fig4-pickplace", "--seed", "3", "--out", str(out), "--format", "table"]) == 0
        outs.append({f: (out / f).read_bytes() for f in files})
    capsys.readouterr()
    same = [f for f in files if outs[0][f] == outs[1][f]]
    verdict("10 determinism", len(same) == len(files), f"{len(same)}/{len(files)} tables byte-identical")


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-q"]))
