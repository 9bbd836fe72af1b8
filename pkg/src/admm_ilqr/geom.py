"""Unit-sphere maps and the SPD matrix logarithm."""
from __future__ import annotations

import numpy as np

from .errors import AntipodalPoints, NotTangent

SPD_EPS = 1e-10
UNIT_TOL = 1e-9
TANGENT_TOL = 1e-6
ANTIPODAL_TOL = 1e-9


def _unit(x, name="x") -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if abs(np.linalg.norm(x) - 1.0) > UNIT_TOL:
        raise ValueError(f"{name} is not a unit vector")
    return x


def sphere_distance(x, y) -> float:
    x, y = _unit(x), _unit(y, "y")
    c = x @ y
    # atan2 keeps full precision near 0 and pi, where arccos does not
    return float(np.arctan2(np.linalg.norm(y - c * x), c))


def sphere_log(x, y) -> np.ndarray:
    """Tangent vector at ``x`` pointing along the geodesic to ``y``."""
    x, y = _unit(x), _unit(y, "y")
    c = x @ y
    if c <= -1.0 + ANTIPODAL_TOL:
        raise AntipodalPoints("logarithmic map undefined for antipodal points")
    v = y - c * x
    nv = np.linalg.norm(v)
    if nv < 1e-15:
        return np.zeros_like(x)
    return np.arctan2(nv, c) * v / nv


def sphere_exp(x, u) -> np.ndarray:
    x = _unit(x)
    u = np.asarray(u, dtype=float)
    if abs(x @ u) > TANGENT_TOL:
        raise NotTangent("u is not tangent at x")
    nu = np.linalg.norm(u)
    if nu < 1e-15:
        return x.copy()
    y = x * np.cos(nu) + u / nu * np.sin(nu)
    return y / np.linalg.norm(y)


def _sym_eig(M):
    M = np.asarray(M, dtype=float)
    return np.linalg.eigh(0.5 * (M + M.T))


def spd_log(M, with_flag: bool = False):
    """Matrix logarithm of an SPD matrix via its symmetric eigendecomposition.

    Eigenvalues under ``SPD_EPS`` are handled by adding ``SPD_EPS * I`` first;
    ``with_flag=True`` additionally returns whether that happened.
    """
    w, V = _sym_eig(M)
    regularized = bool(w.min() < SPD_EPS)
    if regularized:
        w = np.maximum(w + SPD_EPS, SPD_EPS)
    L = (V * np.log(w)) @ V.T
    return (L, regularized) if with_flag else L


def spd_exp(S) -> np.ndarray:
    w, V = _sym_eig(S)
    return (V * np.exp(w)) @ V.T


def spd_inv_sqrt(M) -> np.ndarray:
    w, V = _sym_eig(M)
    if w.min() <= 0.0:
        raise ValueError("matrix is not positive definite")
    return (V / np.sqrt(w)) @ V.T


def spd_distance_sq(A, B, with_flag: bool = False):
    """Squared affine-invariant distance ``||log(A^-1/2 B A^-1/2)||_F^2``."""
    W = spd_inv_sqrt(A)
    L, flag = spd_log(W @ B @ W, with_flag=True)
    d2 = float(np.sum(L * L))
    return (d2, flag) if with_flag else d2
