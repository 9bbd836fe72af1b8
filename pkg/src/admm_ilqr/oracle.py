"""Brute-force reference implementations used by the test suites and ``check``.

Nothing here calls the solver's own arithmetic: kinematics are recomputed from
homogeneous transforms, LQ problems by a backward Riccati recursion, and
projections by exhaustive grid search.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class OracleConfig:
    fd_step: float = 1e-6
    grid_resolution: float = 1e-3
    trials: int = 50
    seed: int = 0

    def __post_init__(self):
        if not self.fd_step > 0.0:
            raise ValueError("fd_step must be positive")
        if not self.grid_resolution > 0.0:
            raise ValueError("grid_resolution must be positive")
        if self.trials < 1:
            raise ValueError("trials must be at least 1")

    def rng(self) -> np.random.Generator:
        return np.random.default_rng(self.seed)


def fd_gradient(scalar_fn, q, step: float = 1e-6) -> np.ndarray:
    """Central-difference gradient."""
    q = np.array(q, dtype=float)
    g = np.empty(q.size)
    for i in range(q.size):
        qp, qm = q.copy(), q.copy()
        qp[i] += step
        qm[i] -= step
        fp, fm = float(scalar_fn(qp)), float(scalar_fn(qm))
        if not (np.isfinite(fp) and np.isfinite(fm)):
            raise ValueError(f"non-finite evaluation near component {i}")
        g[i] = (fp - fm) / (2.0 * step)
    return g


def fd_jacobian(vector_fn, q, step: float = 1e-6) -> np.ndarray:
    q = np.array(q, dtype=float)
    cols = []
    for i in range(q.size):
        qp, qm = q.copy(), q.copy()
        qp[i] += step
        qm[i] -= step
        cols.append((np.asarray(vector_fn(qp), dtype=float) - np.asarray(vector_fn(qm), dtype=float)) / (2.0 * step))
    return np.stack(cols, axis=-1)


# --- LQ reference ------------------------------------------------------------------


def _per_step(M, n: int) -> np.ndarray:
    M = np.asarray(M, dtype=float)
    return np.broadcast_to(M, (n,) + M.shape[-2:]) if M.ndim == 2 else M


def dp_lqr(A, B, Q, R, x_d, x1) -> np.ndarray:
    """Optimal controls of ``sum_t |x_t - xd_t|_Q^2 + sum_t |u_t|_R^2`` by dynamic programming.

    ``x_d`` holds ``T + 1`` targets starting at ``x1``'s timestep; ``A``, ``B``,
    ``Q`` and ``R`` may be single matrices or per-step stacks. Returns ``(T, nu)``.
    """
    x_d = np.atleast_2d(np.asarray(x_d, dtype=float))
    T = x_d.shape[0] - 1
    A, B = _per_step(A, T), _per_step(B, T)
    Q, R = _per_step(Q, T + 1), _per_step(R, T)
    for t in range(T):
        try:
            np.linalg.cholesky(R[t])
        except np.linalg.LinAlgError as exc:
            raise ValueError(f"R at step {t} is not positive definite") from exc

    P = Q[T].copy()
    p = -Q[T] @ x_d[T]
    gains = [None] * T
    for t in range(T - 1, -1, -1):
        G = R[t] + B[t].T @ P @ B[t]
        K = np.linalg.solve(G, B[t].T @ P @ A[t])
        k = np.linalg.solve(G, B[t].T @ p)
        gains[t] = (K, k)
        P_next = Q[t] + A[t].T @ P @ A[t] - A[t].T @ P @ B[t] @ K
        p = -Q[t] @ x_d[t] + A[t].T @ p - A[t].T @ P @ B[t] @ k
        P = 0.5 * (P_next + P_next.T)

    x = np.asarray(x1, dtype=float)
    us = []
    for t in range(T):
        K, k = gains[t]
        u = -K @ x - k
        us.append(u)
        x = A[t] @ x + B[t] @ u
    return np.array(us)


# --- projection reference ---------------------------------------------------------------


def grid_project(point, feasible_predicate, bounds, resolution: float) -> np.ndarray:
    """Nearest feasible grid point; exact ties go to the lexicographically smallest.

    ``feasible_predicate`` receives an ``(N, d)`` array and returns a boolean mask.
    ``bounds`` is ``(d, 2)`` with the grid anchored at the lower corner.
    """
    point = np.asarray(point, dtype=float)
    bounds = np.asarray(bounds, dtype=float)
    axes = [lo + resolution * np.arange(int(np.floor((hi - lo) / resolution + 1e-9)) + 1) for lo, hi in bounds]
    grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, point.size)
    feasible = grid[np.asarray(feasible_predicate(grid), dtype=bool)]
    if feasible.shape[0] == 0:
        raise ValueError("no feasible grid point inside the bounds")
    d2 = np.sum((feasible - point) ** 2, axis=1)
    ties = feasible[d2 == d2.min()]
    order = np.lexsort(ties.T[::-1])
    return ties[order[0]]


# --- kinematics reference -----------------------------------------------------------------


def _h2(angle, x=0.0, y=0.0):
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, -s, x], [s, c, y], [0.0, 0.0, 1.0]])


def _h3(R=None, p=None):
    H = np.eye(4)
    if R is not None:
        H[:3, :3] = R
    if p is not None:
        H[:3, 3] = p
    return H


def _mdh(a, alpha, d, theta):
    ca, sa, ct, st = np.cos(alpha), np.sin(alpha), np.cos(theta), np.sin(theta)
    return np.array(
        [
            [ct, -st, 0.0, a],
            [st * ca, ct * ca, -sa, -d * sa],
            [st * sa, ct * sa, ca, d * ca],
            [0.0, 0.0, 0.0, 1.0],
        ]
    )


def fk_transform(chain, q) -> np.ndarray:
    """Homogeneous end-effector transform (tool tip if attached) from raw chain fields."""
    q = np.asarray(q, dtype=float)
    if chain.kind == "planar":
        H = np.eye(3)
        for qi, length in zip(q, chain.geometry):
            H = H @ _h2(qi) @ _h2(0.0, length, 0.0)
        extra = [] if chain.tool is None else [chain.tool.grip_to_tip]
        for pose in extra:
            G = np.eye(3)
            G[:2, :2] = pose.rotation
            G[:2, 2] = pose.position
            H = H @ G
        return H
    H = np.eye(4)
    for qi, (a, alpha, d, offset) in zip(q, chain.geometry):
        H = H @ _mdh(a, alpha, d, qi + offset)
    H = H @ _h3(chain.flange.rotation, chain.flange.position)
    if chain.tool is not None:
        H = H @ _h3(chain.tool.grip_to_tip.rotation, chain.tool.grip_to_tip.position)
    return H


def fk_position(chain, q) -> np.ndarray:
    H = fk_transform(chain, q)
    return H[:-1, -1].copy()


def fk_jacobian(chain, q, step: float = 1e-6) -> np.ndarray:
    return fd_jacobian(lambda x: fk_position(chain, x), q, step)
