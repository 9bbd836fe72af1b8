"""Consensus ADMM around the batch iLQR solver.

The smooth subproblem (task costs plus quadratic penalties towards the
consensus copies) is solved by a few regularized iLQR iterations; the
consensus copies are then obtained by Euclidean projection onto the control
box and onto the oriented task-space box active at the pick-up timestep.
"""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np

from . import costs as cost_mod
from .chain import KinematicChain, Pose, attach_tool, forward_kinematics
from .errors import SolverAbort
from .manip import impact_velocity_proxy, manipulability_index, velocity_manipulability
from .ocp import ALPHA_MIN, Trajectory, ilqr_step, line_search, linearize, rollout

log = logging.getLogger(__name__)

MIN_HALF_EXTENT = 5e-4
# points this close to a constraint boundary count as feasible, which makes projections idempotent
FEAS_TOL = 1e-12


# --- projections ----------------------------------------------------------------


def project_box(v, lower, upper) -> np.ndarray:
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    if np.any(lower > upper):
        raise ValueError("box lower bound exceeds upper bound")
    return np.clip(np.asarray(v, dtype=float), lower, upper)


def project_affine(x, a, l, u) -> np.ndarray:
    """Projection onto the slab ``l <= a'x <= u`` (either bound may be infinite)."""
    x = np.asarray(x, dtype=float)
    a = np.asarray(a, dtype=float)
    aa = float(a @ a)
    if aa == 0.0:
        raise ValueError("affine constraint needs a nonzero normal")
    ax = float(a @ x)
    tol = FEAS_TOL * max(1.0, abs(ax))
    if ax > u + tol:
        return x - (ax - u) * a / aa
    if ax < l - tol:
        return x - (ax - l) * a / aa
    return x.copy()


@dataclass(frozen=True, eq=False)
class OrientedBox:
    center: np.ndarray
    rotation: np.ndarray
    half_extents: np.ndarray

    def __post_init__(self):
        Pose(self.center, self.rotation).validate()
        if self.half_extents.shape != self.center.shape or np.any(self.half_extents < MIN_HALF_EXTENT):
            raise ValueError(f"box half extents must be >= {MIN_HALF_EXTENT} m per axis")

    def local(self, p) -> np.ndarray:
        return self.rotation.T @ (np.asarray(p, dtype=float) - self.center)

    def contains(self, p, tol: float = FEAS_TOL) -> bool:
        return bool(np.all(np.abs(self.local(p)) <= self.half_extents + tol))

    def distance(self, p) -> float:
        return float(np.linalg.norm(np.asarray(p, dtype=float) - project_oriented_box(p, self)))


def project_oriented_box(p, box: OrientedBox) -> np.ndarray:
    if box.contains(p, FEAS_TOL):
        return np.array(p, dtype=float)
    local = np.clip(box.local(p), -box.half_extents, box.half_extents)
    return box.center + box.rotation @ local


@dataclass(frozen=True, eq=False)
class ConstraintSet:
    """Control box at every timestep plus task-space sets on the gripper position.

    ``state_box`` and ``affine_halfspaces`` (tuples ``(a, l, u)``) apply to the
    position block at ``state_timesteps`` only.
    """

    control_lower: np.ndarray
    control_upper: np.ndarray
    state_box: OrientedBox | None = None
    state_timesteps: tuple = ()
    affine_halfspaces: tuple = ()

    def __post_init__(self):
        if np.any(self.control_lower >= self.control_upper):
            raise ValueError("control bounds must satisfy lower < upper")

    def project_position(self, p) -> np.ndarray:
        sets = []
        if self.state_box is not None:
            sets.append(lambda v: project_oriented_box(v, self.state_box))
        sets.extend(lambda v, h=h: project_affine(v, *h) for h in self.affine_halfspaces)
        if not sets:
            return np.asarray(p, dtype=float).copy()
        if len(sets) == 1:
            return sets[0](p)
        return _dykstra(np.asarray(p, dtype=float), sets)


def _dykstra(p, projections, iters: int = 500, tol: float = 1e-14):
    x = p.copy()
    incs = [np.zeros_like(p) for _ in projections]
    for _ in range(iters):
        x_prev = x
        for i, proj in enumerate(projections):
            y = proj(x + incs[i])
            incs[i] = x + incs[i] - y
            x = y
        if np.sum((x - x_prev) ** 2) < tol:
            break
    return x


# --- ADMM steps -------------------------------------------------------------------


def z_update(x_hat, u_hat, lam_x, lam_u, constraints: ConstraintSet):
    """Consensus copies; ``x_hat`` is ``(T+1, nx)`` with the position block last."""
    z_u = project_box(u_hat + lam_u, constraints.control_lower, constraints.control_upper)
    z_x = np.array(x_hat + lam_x, dtype=float)
    w = z_x.shape[1] - z_u.shape[1]
    for t in constraints.state_timesteps:
        z_x[t, -w:] = constraints.project_position(z_x[t, -w:])
    return z_x, z_u


def dual_update(lam, x_hat, z):
    return lam + x_hat - z


def residuals(x_hat, u_hat, z_x, z_u, z_x_prev, z_u_prev):
    """Squared primal and dual residuals."""
    r_p = float(np.sum((u_hat - z_u) ** 2) + np.sum((x_hat - z_x) ** 2))
    r_d = float(np.sum((z_x_prev - z_x) ** 2) + np.sum((z_u_prev - z_u) ** 2))
    return r_p, r_d


def consensus_admm(x_update, project, n: int, k_max: int = 50, r_p_max: float = 1e-4, r_d_max: float = 1e-4):
    """Plain scaled consensus ADMM for ``min c(x) s.t. x in C``.

    ``x_update(v)`` must return ``argmin c(x) + rho |x - v|^2``.
    """
    z = np.zeros(n)
    lam = np.zeros(n)
    x = z
    history = []
    for k in range(k_max):
        x = np.asarray(x_update(z - lam), dtype=float)
        z_new = project(x + lam)
        lam = dual_update(lam, x, z_new)
        r_p = float(np.sum((x - z_new) ** 2))
        r_d = float(np.sum((z - z_new) ** 2))
        z = z_new
        history.append((k, r_p, r_d))
        if r_p <= r_p_max and r_d <= r_d_max:
            break
    return x, z, lam, history


# --- full solver -----------------------------------------------------------------


@dataclass(frozen=True)
class SolverSettings:
    k_max_admm: int = 20
    k_max_ilqr: int = 10
    c_max: float = 1.0
    r_p_max: float = 1e-4
    r_d_max: float = 1e-4
    q_r: float = 1e1
    r_r: float = 1e-3
    control_weight: float = 1e-5
    alpha_min: float = ALPHA_MIN
    printed_formula: bool = False
    skip_first_state_penalty: bool = True
    min_ilqr_iterations: int = 1


@dataclass(frozen=True, eq=False)
class Problem:
    chain: KinematicChain
    q0: np.ndarray
    horizon: int
    dt: float
    t_pick: int
    constraints: ConstraintSet
    terms: tuple
    settings: SolverSettings = SolverSettings()
    tool_head: Pose | None = None
    task_direction: np.ndarray | None = None
    name: str = ""


@dataclass
class SolveReport:
    status: str
    trajectory: Trajectory
    chain: KinematicChain
    z_x: np.ndarray
    z_u: np.ndarray
    cost_history: list = field(default_factory=list)
    residual_history: list = field(default_factory=list)
    breakdown: dict = field(default_factory=dict)
    constraints: dict = field(default_factory=dict)
    manipulability: dict = field(default_factory=dict)
    flags: list = field(default_factory=list)
    message: str = ""
    timing_s: float = 0.0

    @property
    def converged(self) -> bool:
        return self.status == "converged"

    @property
    def outer_iterations(self) -> int:
        return len(self.residual_history)


def penalty_weights(problem: Problem):
    """Diagonal ADMM penalties: state penalty only on constrained position blocks."""
    T, D = problem.horizon, problem.chain.dof
    w = problem.chain.workspace_dim
    Qr = np.zeros((T + 1, D + w))
    for t in problem.constraints.state_timesteps:
        Qr[t, D:] = problem.settings.q_r
    Rr = np.full(T * D, problem.settings.r_r)
    return Qr.ravel(), Rr


def trajectory_cost(problem: Problem, chain: KinematicChain, traj: Trajectory) -> float:
    total = 0.0
    for t in range(traj.q.shape[0]):
        total += cost_mod.stage_value(problem.terms, chain, traj.q[t], t)
    return total + problem.settings.control_weight * float(np.sum(traj.u**2))


def _cost_expansion(problem: Problem, chain: KinematicChain, traj: Trajectory):
    T1, D = traj.q.shape
    nx = D + traj.p.shape[1]
    K = np.zeros((T1, nx, nx))
    k = np.zeros((T1, nx))
    flags = set()
    for t in range(1, T1):
        ev = cost_mod.assemble_stage_cost(problem.terms, chain, traj.q[t], t)
        K[t, :D, :D] = cost_mod.psd_floor(ev.hess)
        k[t, :D] = ev.grad
        flags.update(ev.flags)
    return K, k, flags


def _bind_tool(problem: Problem, traj: Trajectory) -> KinematicChain:
    bare = problem.chain.bare()
    if problem.tool_head is None:
        return bare
    grip = forward_kinematics(bare, traj.q[problem.t_pick])
    # a tool can only be held on its handle: clamp the grasp point onto the handle range
    if problem.t_pick in problem.constraints.state_timesteps:
        grip = Pose(problem.constraints.project_position(grip.position), grip.rotation)
    return attach_tool(bare, grip, problem.tool_head, problem.t_pick)


def solve(problem) -> SolveReport:
    """ADMM outer loop with an inner regularized iLQR loop."""
    if not isinstance(problem, Problem):
        from .scenario import to_problem

        problem = to_problem(problem)
    start = time.perf_counter()
    s = problem.settings
    T, D = problem.horizon, problem.chain.dof
    bare = problem.chain.bare()
    traj = rollout(bare, problem.q0, np.zeros((T, D)), problem.dt)
    nx = traj.states.shape[1]
    z_x = np.zeros((T + 1, nx))
    z_u = np.zeros((T, D))
    lam_x = np.zeros_like(z_x)
    lam_u = np.zeros_like(z_u)
    Qr, Rr = penalty_weights(problem)
    R = np.full(T * D, s.control_weight)

    def forward(u):
        return rollout(bare, problem.q0, u, problem.dt)

    report = SolveReport("max_iterations", traj, bare, z_x, z_u)
    flags: set = set()
    chain = bare
    try:
        for k_i in range(s.k_max_admm):
            chain = _bind_tool(problem, traj)
            x_r = (z_x - lam_x).ravel()
            u_r = (z_u - lam_u).ravel()
            # the zero-initialized state copy is not a projection of anything yet;
            # the zero control copy is feasible, so its pull stays on
            Qr_k = Qr if k_i > 0 or not s.skip_first_state_penalty else 0.0 * Qr
            Rr_k = Rr

            def cost_fn(tr, chain=chain, x_r=x_r, u_r=u_r, Qr_k=Qr_k, Rr_k=Rr_k):
                c = trajectory_cost(problem, chain, tr)
                c += float(Qr_k @ (tr.x_flat() - x_r) ** 2) + float(Rr_k @ (tr.u_flat() - u_r) ** 2)
                return c

            c = cost_fn(traj)
            if not np.isfinite(c):
                raise SolverAbort(f"non-finite cost at outer iteration {k_i}")
            k_j = 0
            while k_j < s.k_max_ilqr and (c > s.c_max or k_j < s.min_ilqr_iterations):
                lin = linearize(bare, traj)
                K, k, step_flags = _cost_expansion(problem, chain, traj)
                flags.update(step_flags)
                du = ilqr_step(
                    lin.Su, K, k, Qr_k, Rr_k,
                    x_r - traj.x_flat(), u_r - traj.u_flat(),
                    R, traj.u_flat(), printed=s.printed_formula,
                )
                if not np.all(np.isfinite(du)):
                    raise SolverAbort(f"non-finite iLQR step at outer iteration {k_i}")
                traj, alpha, c = line_search(cost_fn, forward, traj, du, s.alpha_min, cost0=c)
                report.cost_history.append({"k_i": k_i, "k_j": k_j, "cost": c, "alpha": alpha})
                k_j += 1
                if alpha == 0.0:
                    break

            x_hat, u_hat = traj.states, traj.u
            z_x_new, z_u_new = z_update(x_hat, u_hat, lam_x, lam_u, problem.constraints)
            lam_x = dual_update(lam_x, x_hat, z_x_new)
            lam_u = dual_update(lam_u, u_hat, z_u_new)
            r_p, r_d = residuals(x_hat, u_hat, z_x_new, z_u_new, z_x, z_u)
            z_x, z_u = z_x_new, z_u_new
            task_cost = trajectory_cost(problem, chain, traj)
            report.residual_history.append(
                {"k_i": k_i, "r_p": r_p, "r_d": r_d, "cost": task_cost, "ilqr_iterations": k_j}
            )
            log.debug("admm %d: r_p=%.3e r_d=%.3e cost=%.6g", k_i, r_p, r_d, task_cost)
            if r_p <= s.r_p_max and r_d <= s.r_d_max:
                report.status = "converged"
                break
    except SolverAbort as exc:
        report.status = "aborted"
        report.message = str(exc)

    report.trajectory = traj
    report.chain = chain
    report.z_x, report.z_u = z_x, z_u
    report.flags = sorted(flags)
    _fill_diagnostics(problem, report)
    report.timing_s = time.perf_counter() - start
    return report


def _fill_diagnostics(problem: Problem, report: SolveReport) -> None:
    traj, chain = report.trajectory, report.chain
    T = problem.horizon
    breakdown = {}
    for t in range(T + 1):
        for kind, v in cost_mod.stage_breakdown(problem.terms, chain, traj.q[t], t).items():
            breakdown[kind] = breakdown.get(kind, 0.0) + v
    breakdown["control"] = problem.settings.control_weight * float(np.sum(traj.u**2))
    report.breakdown = breakdown

    cons = problem.constraints
    info = {
        "control_violation_max": float(
            np.max(np.maximum(traj.u - cons.control_upper, 0.0) + np.maximum(cons.control_lower - traj.u, 0.0))
        ),
        "consensus_control_feasible": bool(
            np.all(report.z_u >= cons.control_lower) and np.all(report.z_u <= cons.control_upper)
        ),
    }
    w = traj.p.shape[1]
    via = []
    for t in cons.state_timesteps:
        p_nom = traj.p[t]
        p_con = report.z_x[t, -w:]
        entry = {"t": int(t), "nominal": p_nom.tolist(), "consensus": p_con.tolist()}
        if cons.state_box is not None:
            entry["nominal_distance"] = cons.state_box.distance(p_nom)
            entry["consensus_inside"] = cons.state_box.contains(p_con)
        via.append(entry)
    info["via"] = via
    final_chain = cost_mod.effective_chain(chain, T)
    tip = forward_kinematics(final_chain, traj.q[T]).position
    info["final_tip"] = tip.tolist()
    for term in problem.terms:
        if term.kind == "position" and term.active(T):
            info["final_position_error"] = float(np.linalg.norm(tip - np.asarray(term.params["target"])))
            break
    report.constraints = info

    ell = velocity_manipulability(final_chain, traj.q[T], weighted=True)
    man = {"index": manipulability_index(ell), "ellipsoid": ell.as_record()}
    if problem.task_direction is not None:
        alpha, attached = impact_velocity_proxy(final_chain, traj.q[T], problem.task_direction)
        man["alpha"] = alpha
        man["tool_attached"] = attached
    report.manipulability = man
