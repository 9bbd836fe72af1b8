"""Velocity manipulability ellipsoids and the scalar metrics derived from them."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .chain import KinematicChain, forward_kinematics, jacobian

DET_NEG_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class ManipulabilityEllipsoid:
    M: np.ndarray
    center: np.ndarray
    eigvals: np.ndarray
    eigvecs: np.ndarray

    @classmethod
    def from_matrix(cls, M, center) -> "ManipulabilityEllipsoid":
        M = 0.5 * (np.asarray(M, dtype=float) + np.asarray(M, dtype=float).T)
        w, V = np.linalg.eigh(M)
        return cls(M, np.asarray(center, dtype=float), w, V)

    def as_record(self) -> dict:
        return {
            "center": self.center.tolist(),
            "eigenvalues": self.eigvals.tolist(),
            "eigenvectors": self.eigvecs.T.tolist(),
        }


def joint_weight(chain: KinematicChain) -> np.ndarray:
    """Diagonal joint weighting: speed limits normalised by the fastest joint."""
    return np.diag(chain.qdot_limits / chain.qdot_limits.max())


def manipulability_matrix(chain: KinematicChain, q, weighted: bool = True) -> np.ndarray:
    J = jacobian(chain, q)
    if weighted:
        JW = J @ joint_weight(chain)
        return JW @ JW.T
    return J @ J.T


def velocity_manipulability(chain: KinematicChain, q, weighted: bool = False) -> ManipulabilityEllipsoid:
    M = manipulability_matrix(chain, q, weighted)
    return ManipulabilityEllipsoid.from_matrix(M, forward_kinematics(chain, q).position)


def directional_projection(M, u) -> float:
    """Extent of the ellipsoid ``M`` along unit direction ``u``."""
    M = M.M if isinstance(M, ManipulabilityEllipsoid) else np.asarray(M, dtype=float)
    u = np.asarray(u, dtype=float)
    return float(np.sqrt(max(u @ M @ u, 0.0)))


def manipulability_index(M) -> float:
    M = M.M if isinstance(M, ManipulabilityEllipsoid) else np.asarray(M, dtype=float)
    det = np.linalg.det(M)
    if det < -DET_NEG_TOL:
        raise ArithmeticError(f"manipulability determinant {det} is negative")
    return float(np.sqrt(max(det, 0.0)))


def impact_velocity_proxy(chain: KinematicChain, q, n):
    """Projected tip speed along the task direction ``n``.

    Uses the weighted ellipsoid of the (tool-extended) chain. Returns
    ``(value, tool_attached)`` so callers can flag runs on a bare chain.
    """
    M = manipulability_matrix(chain, q, weighted=True)
    return directional_projection(M, n), chain.tool is not None
