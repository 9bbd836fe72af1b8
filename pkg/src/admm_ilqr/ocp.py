"""Single-integrator joint dynamics, batch linearization and the batch iLQR step.

The state at each timestep stacks joint angles and the gripper position,
``x_t = (q_t, p_t)`` with ``p_t = fkin(q_t)``. Controls are joint velocities.
Trajectories hold ``T + 1`` states and ``T`` controls; the first state is
fixed, so the linearized deviation ``dx_0`` is always zero.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .chain import KinematicChain, forward_kinematics, jacobian

ALPHA_MIN = 2.0**-10


@dataclass(frozen=True, eq=False)
class Trajectory:
    q: np.ndarray  # (T+1, D)
    p: np.ndarray  # (T+1, w)
    u: np.ndarray  # (T, D)
    dt: float

    @property
    def T(self) -> int:
        return self.u.shape[0]

    @property
    def states(self) -> np.ndarray:
        return np.hstack([self.q, self.p])

    def x_flat(self) -> np.ndarray:
        return self.states.ravel()

    def u_flat(self) -> np.ndarray:
        return self.u.ravel()


@dataclass(frozen=True, eq=False)
class LinearizedSystem:
    A: np.ndarray  # (T, nx, nx)
    B: np.ndarray  # (T, nx, D)
    Su: np.ndarray  # ((T+1) nx, T D)
    zero_initial: bool = True


def rollout(chain: KinematicChain, q0, controls, dt: float) -> Trajectory:
    """Integrate joint velocities and recompute the gripper positions."""
    u = np.asarray(controls, dtype=float)
    if not np.all(np.isfinite(u)):
        raise ValueError("controls contain non-finite values")
    q0 = np.asarray(q0, dtype=float)
    q = np.vstack([q0, q0 + dt * np.cumsum(u, axis=0)])
    bare = chain.bare()
    p = np.array([forward_kinematics(bare, qt).position for qt in q])
    return Trajectory(q, p, u, float(dt))


def transfer_matrices(A, B):
    """Stacked ``S_x`` and ``S_u`` for ``x_{t+1} = A_t x_t + B_t u_t`` with ``T`` steps."""
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    T, nx, nu = B.shape
    Sx = np.zeros(((T + 1) * nx, nx))
    Su = np.zeros(((T + 1) * nx, T * nu))
    Sx[:nx] = np.eye(nx)
    for t in range(T):
        rows = slice((t + 1) * nx, (t + 2) * nx)
        prev = slice(t * nx, (t + 1) * nx)
        Sx[rows] = A[t] @ Sx[prev]
        Su[rows, : t * nu] = A[t] @ Su[prev, : t * nu]
        Su[rows, t * nu : (t + 1) * nu] = B[t]
    return Sx, Su


def linearize(chain: KinematicChain, traj: Trajectory) -> LinearizedSystem:
    bare = chain.bare()
    T, D = traj.u.shape
    w = traj.p.shape[1]
    nx = D + w
    J = np.array([jacobian(bare, traj.q[t]) for t in range(1, T + 1)])  # J(q_{t+1})
    A = np.zeros((T, nx, nx))
    A[:, :D, :D] = np.eye(D)
    A[:, D:, :D] = J
    B = np.empty((T, nx, D))
    B[:, :D, :] = traj.dt * np.eye(D)
    B[:, D:, :] = traj.dt * J
    # q-rows of S_u are dt * lower-triangular; the p-rows left-multiply them by J(q_t).
    Su = np.zeros((T + 1, nx, T, D))
    for t in range(1, T + 1):
        Su[t, :D, :t, :] = traj.dt * np.eye(D)[:, None, :]
        Su[t, D:, :t, :] = traj.dt * J[t - 1][:, None, :]
    return LinearizedSystem(A, B, Su.reshape((T + 1) * nx, T * D))


def batch_lqr(Su, Q, R, x_d, x1, Sx) -> np.ndarray:
    """Minimizer of ``(x - x_d)' Q (x - x_d) + u' R u`` with ``x = Sx x1 + Su u``."""
    H = Su.T @ Q @ Su + R
    rhs = Su.T @ Q @ (x_d - Sx @ x1)
    try:
        return scipy.linalg.solve(H, rhs, assume_a="pos")
    except (np.linalg.LinAlgError, scipy.linalg.LinAlgError) as exc:
        raise np.linalg.LinAlgError("batch LQR normal matrix is singular") from exc


def ilqr_step(Su, K, k, Qr, Rr, dx_r, du_r, R, u_hat, printed: bool = False) -> np.ndarray:
    """Batch regularized iLQR step.

    Minimizes ``1/2 |dx - x_d|_K^2 + |du - u_d|_R^2 + |dx - dx_r|_Qr^2 + |du - du_r|_Rr^2``
    subject to ``dx = Su du`` where ``K x_d = -k`` and ``u_d = -u_hat``.

    ``K`` is ``(T+1, nx, nx)`` block-diagonal, ``k`` the matching gradient
    ``(T+1, nx)``; ``Qr``, ``Rr`` and ``R`` are diagonals as flat vectors.
    ``printed=True`` drops the ``R u_d`` term of the right-hand side.
    """
    n_steps, nx, _ = K.shape
    nu_total = Su.shape[1]
    S = Su.reshape(n_steps, nx, nu_total)
    H = np.zeros((nu_total, nu_total))
    rhs = np.zeros(nu_total)
    for t in range(n_steps):
        if np.any(K[t]) or np.any(k[t]):
            St = S[t]
            H += 0.5 * St.T @ K[t] @ St
            rhs -= 0.5 * St.T @ k[t]
    active = np.flatnonzero(Qr)
    if active.size:
        Sa = Su[active]
        H += Sa.T @ (Qr[active, None] * Sa)
        rhs += Sa.T @ (Qr[active] * dx_r[active])
    H[np.diag_indices(nu_total)] += R + Rr
    rhs += Rr * du_r
    if not printed:
        rhs -= R * u_hat
    try:
        factor = scipy.linalg.cho_factor(H)
    except (np.linalg.LinAlgError, scipy.linalg.LinAlgError) as exc:
        raise np.linalg.LinAlgError("iLQR normal matrix is not positive definite") from exc
    return scipy.linalg.cho_solve(factor, rhs)


def line_search(cost_fn, forward_fn, traj: Trajectory, du: np.ndarray, alpha_min: float = ALPHA_MIN, cost0=None):
    """Backtracking by halving until the total cost does not increase.

    ``forward_fn(u)`` rolls out a control array; ``cost_fn(traj)`` evaluates it.
    Returns ``(trajectory, alpha, cost)``; ``alpha == 0`` means no acceptable
    step was found and the input trajectory is returned unchanged.
    """
    c0 = cost_fn(traj) if cost0 is None else cost0
    du = np.asarray(du, dtype=float).reshape(traj.u.shape)
    alpha = 1.0
    cand = forward_fn(traj.u + alpha * du)
    c = cost_fn(cand)
    while not c <= c0 and alpha > alpha_min:
        alpha /= 2.0
        cand = forward_fn(traj.u + alpha * du)
        c = cost_fn(cand)
    if not c <= c0:
        return traj, 0.0, c0
    return cand, alpha, c
