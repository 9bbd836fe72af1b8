"""Randomized cross-checks of the solver building blocks against :mod:`oracle`.

Each suite returns a :class:`SuiteResult` with the worst error it observed.
They back the ``check`` command and the acceptance tests.
"""
from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from . import geom, oracle
from .admm import FEAS_TOL, OrientedBox, project_affine, project_box, project_oriented_box
from .chain import Pose, attach_tool, chain_preset, forward_kinematics, jacobian, rot2, rot_x, rot_z
from .costs import KINDS, CostTerm, make_desired_ellipsoid
from .ocp import batch_lqr, transfer_matrices


@dataclass(frozen=True)
class SuiteResult:
    name: str
    passed: bool
    max_error: float
    tolerance: float
    trials: int
    elapsed_s: float = 0.0
    detail: str = ""

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"{status} {self.name}: max error {self.max_error:.3e} (tol {self.tolerance:.0e}, {self.trials} trials){self.detail}"


def _unit(rng, n):
    v = rng.normal(size=n)
    return v / np.linalg.norm(v)


def _random_q(rng, chain, spread=1.0):
    lo, hi = chain.q_limits[:, 0], chain.q_limits[:, 1]
    mid, half = 0.5 * (lo + hi), 0.5 * (hi - lo)
    return mid + spread * half * rng.uniform(-1.0, 1.0, size=chain.dof)


def _random_rotation(rng, w):
    if w == 2:
        return rot2(rng.uniform(-np.pi, np.pi))
    return rot_z(rng.uniform(-np.pi, np.pi)) @ rot_x(rng.uniform(-np.pi, np.pi)) @ rot_z(rng.uniform(-np.pi, np.pi))


def _test_chains(rng):
    planar = chain_preset("planar3")
    tool = Pose(np.array([0.4, 0.3]), rot2(0.7))
    with_tool = attach_tool(planar, Pose(np.zeros(2), np.eye(2)), tool, 0)
    return [planar, with_tool, chain_preset("spatial7")]


def _random_term(rng, kind, chain):
    w = chain.workspace_dim
    weight = float(10.0 ** rng.uniform(-1, 2))
    if kind == "position":
        return CostTerm(kind, weight, None, {"target": rng.uniform(-1.0, 1.0, size=w)})
    if kind == "orientation":
        return CostTerm(kind, weight, None, {"handle_axis": _unit(rng, w)})
    if kind == "direction":
        return CostTerm(kind, weight, None, {"target_direction": _unit(rng, w), "tool_axis": _unit(rng, w)})
    if kind == "joint_limit":
        return CostTerm(kind, weight)
    if kind == "man_directional":
        return CostTerm(kind, weight, None, {"direction": _unit(rng, w)})
    if kind == "man_determinant":
        return CostTerm(kind, weight)
    return CostTerm(kind, weight, None, {"desired": make_desired_ellipsoid(_unit(rng, w), 4.0, 0.5)})


def gradient_suite(config: oracle.OracleConfig = oracle.OracleConfig(), tol: float = 1e-4, grad_hook=None) -> SuiteResult:
    """Every cost gradient against central differences of the cost value.

    ``grad_hook(kind, grad)`` may alter returned gradients (negative controls).
    """
    start = time.perf_counter()
    rng = config.rng()
    chains = _test_chains(rng)
    worst, worst_kind, n = 0.0, "", 0
    for kind in KINDS:
        for trial in range(config.trials):
            chain = chains[trial % len(chains)]
            term = _random_term(rng, kind, chain)
            # joint-limit samples reach past the limits so the penalty is active
            q = _random_q(rng, chain, 1.3 if kind == "joint_limit" else 0.95)
            grad = term.evaluate(chain, q).grad
            if grad_hook is not None:
                grad = grad_hook(kind, grad)
            ref = oracle.fd_gradient(lambda x: term.value(chain, x), q, config.fd_step)
            err = float(np.linalg.norm(grad - ref) / max(np.linalg.norm(ref), 1e-6))
            n += 1
            if err > worst:
                worst, worst_kind = err, kind
    return SuiteResult(
        "gradient", worst < tol, worst, tol, n, time.perf_counter() - start, f" worst term {worst_kind}" if worst_kind else ""
    )


def kinematics_suite(config: oracle.OracleConfig = oracle.OracleConfig(), tol: float = 1e-5) -> SuiteResult:
    """Forward kinematics against homogeneous transforms and Jacobians against differences."""
    start = time.perf_counter()
    rng = config.rng()
    worst, n = 0.0, 0
    for chain in _test_chains(rng):
        for _ in range(config.trials):
            q = _random_q(rng, chain)
            H = oracle.fk_transform(chain, q)
            pose = forward_kinematics(chain, q)
            fk_err = max(np.abs(H[:-1, -1] - pose.position).max(), np.abs(H[:-1, :-1] - pose.rotation).max())
            J_ref = oracle.fk_jacobian(chain, q, config.fd_step)
            J_err = np.linalg.norm(jacobian(chain, q) - J_ref) / max(np.linalg.norm(J_ref), 1e-9)
            worst = max(worst, float(fk_err), float(J_err))
            n += 1
    return SuiteResult("kinematics", worst < tol, worst, tol, n, time.perf_counter() - start)


def lqr_suite(config: oracle.OracleConfig = oracle.OracleConfig(), tol: float = 1e-8) -> SuiteResult:
    """Batch least-squares LQ solution against the Riccati recursion."""
    start = time.perf_counter()
    rng = config.rng()
    worst = 0.0
    for _ in range(config.trials):
        nx = int(rng.integers(1, 4))
        nu = int(rng.integers(1, 4))
        T = int(rng.integers(1, 11))
        A = np.eye(nx) + 0.2 * rng.normal(size=(T, nx, nx))
        B = rng.normal(size=(T, nx, nu))
        Qs = []
        for _t in range(T + 1):
            M = rng.normal(size=(nx, nx))
            Qs.append(M @ M.T + 0.1 * np.eye(nx))
        Rs = [np.diag(rng.uniform(0.1, 1.0, size=nu)) for _ in range(T)]
        x_d = rng.normal(size=(T + 1, nx))
        x1 = rng.normal(size=nx)
        Sx, Su = transfer_matrices(A, B)
        u_batch = batch_lqr(Su, scipy.linalg.block_diag(*Qs), scipy.linalg.block_diag(*Rs), x_d.ravel(), x1, Sx)
        u_dp = oracle.dp_lqr(A, B, np.array(Qs), np.array(Rs), x_d, x1)
        worst = max(worst, float(np.abs(u_batch.reshape(T, nu) - u_dp).max()))
    return SuiteResult("lqr", worst < tol, worst, tol, config.trials, time.perf_counter() - start)


def _projection_cases(rng, trials):
    """Yield ``(label, point, projector, predicate)`` for each projection kind."""
    for _ in range(trials):
        lo = rng.uniform(-1.0, 0.0, size=2)
        hi = lo + rng.uniform(0.1, 1.0, size=2)
        x = rng.uniform(-2.0, 2.0, size=2)
        yield (
            "box",
            x,
            lambda v, lo=lo, hi=hi: project_box(v, lo, hi),
            lambda P, tol=0.0, lo=lo, hi=hi: np.all((P >= lo - tol) & (P <= hi + tol), axis=1),
        )
        a = _unit(rng, 2) * rng.uniform(0.5, 2.0)
        l = rng.uniform(-1.0, 0.0)
        u = l + rng.uniform(0.05, 1.0)
        if rng.uniform() < 0.3:
            l = -np.inf
        yield (
            "affine",
            rng.uniform(-2.0, 2.0, size=2),
            lambda v, a=a, l=l, u=u: project_affine(v, a, l, u),
            lambda P, tol=0.0, a=a, l=l, u=u: (P @ a <= u + tol) & (P @ a >= l - tol),
        )
        for w in (2, 3):
            box = OrientedBox(
                rng.uniform(-0.5, 0.5, size=w),
                _random_rotation(rng, w),
                rng.uniform(0.05, 0.5, size=w),
            )
            yield (
                f"oriented{w}",
                rng.uniform(-1.5, 1.5, size=w),
                lambda v, box=box: project_oriented_box(v, box),
                lambda P, tol=0.0, box=box: np.all(np.abs((P - box.center) @ box.rotation) <= box.half_extents + tol, axis=1),
            )


def projection_suite(config: oracle.OracleConfig = oracle.OracleConfig(trials=100)) -> SuiteResult:
    """Idempotence, feasibility and nearest-point optimality against grid search.

    The error reported is the largest amount by which some feasible grid point
    beats the projection (zero when none does); idempotence and feasibility
    violations fail the suite outright.
    """
    start = time.perf_counter()
    rng = config.rng()
    res = config.grid_resolution
    worst, n, problems = 0.0, 0, []
    for label, x, proj, feasible in _projection_cases(rng, config.trials):
        y = proj(x)
        if not np.array_equal(proj(y), y):
            problems.append(f"{label} not idempotent")
        if not feasible(y[None, :], FEAS_TOL)[0]:
            problems.append(f"{label} infeasible")
        # convex sets: local optimality around y is global optimality
        half = (12 if y.size == 3 else 40) * res
        bounds = np.stack([y - half, y + half], axis=1)
        g = oracle.grid_project(x, feasible, bounds, res)
        beaten = max(0.0, float(np.linalg.norm(x - y) - np.linalg.norm(x - g)))
        worst = max(worst, beaten)
        n += 1
    tol = FEAS_TOL
    detail = f"; {problems[0]}" if problems else ""
    return SuiteResult("projection", worst <= tol and not problems, worst, tol, n, time.perf_counter() - start, detail)


def geometry_suite(config: oracle.OracleConfig = oracle.OracleConfig(), sphere_pairs: int = 1000, spd_trials: int = 100) -> SuiteResult:
    """Exp/Log roundtrips on the sphere and on SPD matrices."""
    start = time.perf_counter()
    rng = config.rng()
    sphere_err = 0.0
    done = 0
    while done < sphere_pairs:
        w = 2 + done % 2
        x, y = _unit(rng, w), _unit(rng, w)
        if geom.sphere_distance(x, y) >= np.pi - 1e-3:
            continue
        sphere_err = max(sphere_err, float(np.linalg.norm(geom.sphere_exp(x, geom.sphere_log(x, y)) - y)))
        done += 1
    spd_err = 0.0
    for i in range(spd_trials):
        n = 2 + i % 2
        M = rng.normal(size=(n, n))
        S = M @ M.T + 0.05 * np.eye(n)
        spd_err = max(spd_err, float(np.linalg.norm(geom.spd_exp(geom.spd_log(S)) - S)))
    passed = sphere_err < 1e-9 and spd_err < 1e-8
    detail = f" (sphere {sphere_err:.1e} / 1e-9, spd {spd_err:.1e} / 1e-8)"
    return SuiteResult(
        "geometry", passed, max(sphere_err, spd_err), 1e-8, sphere_pairs + spd_trials, time.perf_counter() - start, detail
    )


SUITES = {
    "gradient": gradient_suite,
    "kinematics": kinematics_suite,
    "lqr": lqr_suite,
    "projection": projection_suite,
    "geometry": geometry_suite,
}


def run_suites(names=None, seed: int = 0, grad_hook=None) -> list:
    out = []
    for name in names or SUITES:
        fn = SUITES[name]
        trials = 100 if name == "projection" else 50
        cfg = oracle.OracleConfig(trials=trials, seed=seed)
        out.append(fn(cfg, grad_hook=grad_hook) if name == "gradient" else fn(cfg))
    return out
