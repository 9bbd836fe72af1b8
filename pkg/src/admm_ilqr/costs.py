"""Task cost terms evaluated on joint configurations.

Every term returns a :class:`CostEvaluation` holding the value, the gradient
with respect to ``q`` and a positive semi-definite Hessian approximation.
Squared-residual terms use Gauss-Newton Hessians. Manipulability terms need
derivatives of the Jacobian, which are taken by central differences of the
scalar cost.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import geom
from .chain import KinematicChain, angular_jacobian, forward_kinematics, jacobian
from .errors import AntipodalPoints
from .manip import manipulability_matrix

SING_EPS = 1e-10
GRAD_STEP = 1e-6
HESS_STEP = 1e-4

KINDS = (
    "orientation",
    "position",
    "direction",
    "joint_limit",
    "man_directional",
    "man_determinant",
    "man_tracking",
)
MAN_KINDS = {
    "directional": "man_directional",
    "determinant": "man_determinant",
    "tracking": "man_tracking",
}


@dataclass(frozen=True, eq=False)
class CostEvaluation:
    value: float
    grad: np.ndarray
    hess: np.ndarray
    flags: tuple = ()

    @classmethod
    def zero(cls, dof: int) -> "CostEvaluation":
        return cls(0.0, np.zeros(dof), np.zeros((dof, dof)))

    def __add__(self, other: "CostEvaluation") -> "CostEvaluation":
        return CostEvaluation(
            self.value + other.value,
            self.grad + other.grad,
            self.hess + other.hess,
            self.flags + tuple(f for f in other.flags if f not in self.flags),
        )


def psd_floor(H: np.ndarray) -> np.ndarray:
    H = 0.5 * (H + H.T)
    w, V = np.linalg.eigh(H)
    if w.min() >= 0.0:
        return H
    return (V * np.maximum(w, 0.0)) @ V.T


def _inactive(t, active) -> bool:
    if t is None or active is None:
        return False
    if isinstance(active, (int, np.integer)):
        return t != active
    return t not in active


def _frame_axis(chain: KinematicChain, q, local_axis):
    """World image of a frame axis of the effective end-effector and its q-derivative."""
    v = forward_kinematics(chain, q).rotation @ np.asarray(local_axis, dtype=float)
    Jw = angular_jacobian(chain, q)
    if chain.kind == "planar":
        dv = np.outer([-v[1], v[0]], Jw[0])
    else:
        dv = np.cross(Jw.T, v).T
    return v, dv


def _gripper_y(chain: KinematicChain) -> np.ndarray:
    return np.eye(chain.workspace_dim)[:, 1]


# --- squared-residual terms ---------------------------------------------------


def cost_orientation(chain, q, weight, handle_axis, t=None, active=None) -> CostEvaluation:
    """Grasp-orientation cost: squared cosine between the gripper y axis and the handle axis."""
    q = np.asarray(q, dtype=float)
    h = np.asarray(handle_axis, dtype=float)
    if abs(np.linalg.norm(h) - 1.0) > 1e-9:
        raise ValueError("handle axis must be a unit vector")
    if _inactive(t, active):
        return CostEvaluation.zero(q.size)
    v, dv = _frame_axis(chain, q, _gripper_y(chain))
    e = v @ h
    g = dv.T @ h
    e = float(e)
    return CostEvaluation(weight * e * e, 2.0 * weight * e * g, 2.0 * weight * np.outer(g, g))


def cost_position(chain, q, weight, target, t=None, active=None) -> CostEvaluation:
    q = np.asarray(q, dtype=float)
    if _inactive(t, active):
        return CostEvaluation.zero(q.size)
    e = forward_kinematics(chain, q).position - np.asarray(target, dtype=float)
    J = jacobian(chain, q)
    return CostEvaluation(weight * float(e @ e), 2.0 * weight * J.T @ e, 2.0 * weight * J.T @ J)


def cost_direction(chain, q, weight, target_direction, tool_axis=None, t=None, active=None) -> CostEvaluation:
    """Geodesic direction error of a designated end-effector frame axis."""
    q = np.asarray(q, dtype=float)
    if _inactive(t, active):
        return CostEvaluation.zero(q.size)
    vh = np.asarray(target_direction, dtype=float)
    axis = np.eye(chain.workspace_dim)[:, 0] if tool_axis is None else tool_axis
    v, dv = _frame_axis(chain, q, axis)
    v = v / np.linalg.norm(v)
    P = np.eye(v.size) - np.outer(v, v)
    hess = 2.0 * weight * dv.T @ P @ dv
    try:
        d = float(np.linalg.norm(geom.sphere_log(vh, v)))
    except AntipodalPoints:
        # the gradient vanishes at the antipode; report it instead of failing
        return CostEvaluation(weight * np.pi**2, np.zeros(q.size), hess, ("antipodal_direction",))
    s = np.sin(d)
    ratio = d / s if s > 1e-12 else 1.0
    grad = -2.0 * weight * ratio * (dv.T @ vh)
    return CostEvaluation(weight * d * d, grad, hess)


def cost_joint_limit(q, q_limits, weight=1.0, t=None, active=None) -> CostEvaluation:
    """Penalty on the excess beyond the nearest violated joint bound."""
    q = np.asarray(q, dtype=float)
    if _inactive(t, active):
        return CostEvaluation.zero(q.size)
    lo, hi = q_limits[:, 0], q_limits[:, 1]
    q_bound = np.where(q >= hi, hi, np.where(q <= lo, lo, q))
    lam = ((q >= hi) | (q <= lo)).astype(float)
    r = q - q_bound
    return CostEvaluation(
        weight * float(np.sum(lam * r * r)),
        2.0 * weight * lam * r,
        2.0 * weight * np.diag(lam),
    )


# --- manipulability terms -----------------------------------------------------


def _man_directional_value(chain, q, weight, direction):
    n = np.asarray(direction, dtype=float)
    a2 = float(n @ manipulability_matrix(chain, q, weighted=True) @ n)
    if a2 < SING_EPS:
        return weight / SING_EPS, ("singular_direction",)
    return weight / a2, ()


def _man_determinant_value(chain, q, weight):
    det = float(np.linalg.det(manipulability_matrix(chain, q, weighted=True)))
    if det < SING_EPS:
        return weight / SING_EPS**2, ("singular_determinant",)
    return weight / det**2, ()


def _man_tracking_value(chain, q, weight, desired):
    d2, flag = geom.spd_distance_sq(desired, manipulability_matrix(chain, q, weighted=True), with_flag=True)
    return weight * d2, (("near_singular",) if flag else ())


def _fd_expansion(value_fn, q):
    """Value, central-difference gradient and differenced, PSD-floored Hessian."""
    q = np.asarray(q, dtype=float)
    value, flags = value_fn(q)

    def grad_at(x):
        g = np.empty(x.size)
        for i in range(x.size):
            e = np.zeros(x.size)
            e[i] = GRAD_STEP
            g[i] = (value_fn(x + e)[0] - value_fn(x - e)[0]) / (2.0 * GRAD_STEP)
        return g

    grad = grad_at(q)
    H = np.empty((q.size, q.size))
    for i in range(q.size):
        e = np.zeros(q.size)
        e[i] = HESS_STEP
        H[:, i] = (grad_at(q + e) - grad_at(q - e)) / (2.0 * HESS_STEP)
    return CostEvaluation(value, grad, psd_floor(H), flags)


def cost_man_directional(chain, q, weight, direction, t=None, active=None) -> CostEvaluation:
    """Inverse squared manipulability along ``direction``."""
    q = np.asarray(q, dtype=float)
    if _inactive(t, active):
        return CostEvaluation.zero(q.size)
    return _fd_expansion(lambda x: _man_directional_value(chain, x, weight, direction), q)


def cost_man_determinant(chain, q, weight, t=None, active=None) -> CostEvaluation:
    q = np.asarray(q, dtype=float)
    if _inactive(t, active):
        return CostEvaluation.zero(q.size)
    return _fd_expansion(lambda x: _man_determinant_value(chain, x, weight), q)


def cost_man_tracking(chain, q, weight, desired, t=None, active=None) -> CostEvaluation:
    q = np.asarray(q, dtype=float)
    if _inactive(t, active):
        return CostEvaluation.zero(q.size)
    return _fd_expansion(lambda x: _man_tracking_value(chain, x, weight, desired), q)


def make_desired_ellipsoid(n, major: float, minor: float) -> np.ndarray:
    """SPD matrix with eigenvalue ``major`` along ``n`` and ``minor`` on the orthogonal complement."""
    n = np.asarray(n, dtype=float)
    if not major > minor > 0.0:
        raise ValueError("need major > minor > 0")
    if abs(np.linalg.norm(n) - 1.0) > 1e-9:
        raise ValueError("direction must be a unit vector")
    return minor * np.eye(n.size) + (major - minor) * np.outer(n, n)


# --- scheduled terms ----------------------------------------------------------


@dataclass(frozen=True, eq=False)
class CostTerm:
    """A weighted cost component; ``schedule=None`` means every timestep."""

    kind: str
    weight: float
    schedule: frozenset | None = None
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown cost kind {self.kind!r}")
        if self.weight < 0.0:
            raise ValueError("cost weights must be nonnegative")

    def active(self, t: int) -> bool:
        return self.schedule is None or t in self.schedule

    def evaluate(self, chain: KinematicChain, q) -> CostEvaluation:
        p, w = self.params, self.weight
        k = self.kind
        if k == "position":
            return cost_position(chain, q, w, p["target"])
        if k == "orientation":
            return cost_orientation(chain, q, w, p["handle_axis"])
        if k == "direction":
            return cost_direction(chain, q, w, p["target_direction"], p.get("tool_axis"))
        if k == "joint_limit":
            return cost_joint_limit(q, chain.q_limits, w)
        if k == "man_directional":
            return cost_man_directional(chain, q, w, p["direction"])
        if k == "man_determinant":
            return cost_man_determinant(chain, q, w)
        return cost_man_tracking(chain, q, w, p["desired"])

    def value(self, chain: KinematicChain, q) -> float:
        k = self.kind
        if k == "man_directional":
            return _man_directional_value(chain, q, self.weight, self.params["direction"])[0]
        if k == "man_determinant":
            return _man_determinant_value(chain, q, self.weight)[0]
        if k == "man_tracking":
            return _man_tracking_value(chain, q, self.weight, self.params["desired"])[0]
        if k == "position":
            e = forward_kinematics(chain, q).position - np.asarray(self.params["target"], dtype=float)
            return self.weight * float(e @ e)
        return self.evaluate(chain, q).value


def effective_chain(chain: KinematicChain, t: int) -> KinematicChain:
    """The tool only counts as part of the chain after its pick-up timestep."""
    if chain.tool is not None and t <= chain.tool.attach_timestep:
        return chain.bare()
    return chain


def assemble_stage_cost(terms, chain: KinematicChain, q, t: int) -> CostEvaluation:
    total = CostEvaluation.zero(chain.dof)
    eff = effective_chain(chain, t)
    for term in terms:
        if term.active(t):
            total = total + term.evaluate(eff, q)
    return total


def stage_value(terms, chain: KinematicChain, q, t: int) -> float:
    eff = effective_chain(chain, t)
    return sum(term.value(eff, q) for term in terms if term.active(t))


def stage_breakdown(terms, chain: KinematicChain, q, t: int) -> dict:
    eff = effective_chain(chain, t)
    return {term.kind: term.value(eff, q) for term in terms if term.active(t)}
