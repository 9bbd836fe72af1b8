"""Serial kinematic chains: forward kinematics, geometric Jacobians and tool extension.

Two chain kinds are supported. Planar chains rotate every joint about the
out-of-plane axis and are described by their link lengths. Spatial chains are
described by modified Denavit-Hartenberg rows ``(a, alpha, d, theta_offset)``
followed by a fixed flange transform to the gripper frame.

A rigidly grasped tool is modelled as one more (fixed) link: when a chain
carries a :class:`ToolAttachment`, every kinematic query answers for the tool
tip instead of the gripper.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import DimensionError, NotOrthonormal

ORTHO_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class Pose:
    position: np.ndarray
    rotation: np.ndarray

    @property
    def dim(self) -> int:
        return self.position.shape[0]

    @classmethod
    def identity(cls, dim: int = 3) -> "Pose":
        return cls(np.zeros(dim), np.eye(dim))

    def validate(self) -> "Pose":
        R = np.asarray(self.rotation, dtype=float)
        p = np.asarray(self.position, dtype=float)
        if R.shape != (p.shape[0], p.shape[0]) or p.shape[0] not in (2, 3):
            raise DimensionError(f"pose shapes {p.shape} / {R.shape} are inconsistent")
        if not np.allclose(R.T @ R, np.eye(p.shape[0]), atol=ORTHO_TOL, rtol=0.0):
            raise NotOrthonormal("rotation is not orthonormal")
        if np.linalg.det(R) < 0.0:
            raise NotOrthonormal("rotation has determinant -1")
        return self

    def compose(self, other: "Pose") -> "Pose":
        return Pose(self.position + self.rotation @ other.position, self.rotation @ other.rotation)

    def inverse(self) -> "Pose":
        Rt = self.rotation.T
        return Pose(-Rt @ self.position, Rt)


def make_pose(position, rotation) -> Pose:
    """Build a validated pose from array-likes."""
    return Pose(np.array(position, dtype=float), np.array(rotation, dtype=float)).validate()


def rot2(angle: float) -> np.ndarray:
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, -s], [s, c]])


def rot_z(angle: float) -> np.ndarray:
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def rot_x(angle: float) -> np.ndarray:
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


@dataclass(frozen=True, eq=False)
class ToolAttachment:
    grip_to_tip: Pose
    attach_timestep: int


@dataclass(frozen=True, eq=False)
class KinematicChain:
    """Immutable serial chain description.

    ``geometry`` holds link lengths ``(D,)`` for planar chains and modified DH
    rows ``(D, 4)`` for spatial ones. ``flange`` is the fixed transform from the
    last joint frame to the gripper frame (identity for planar chains).
    """

    kind: str
    geometry: np.ndarray
    q_limits: np.ndarray
    qdot_limits: np.ndarray
    flange: Pose
    tool: ToolAttachment | None = None
    name: str = ""

    def __post_init__(self):
        if self.kind not in ("planar", "spatial"):
            raise ValueError(f"unknown chain kind {self.kind!r}")
        D = self.geometry.shape[0]
        if D < 1:
            raise DimensionError("chain needs at least one joint")
        if self.q_limits.shape != (D, 2) or self.qdot_limits.shape != (D,):
            raise DimensionError("limit arrays do not match the joint count")
        if np.any(self.q_limits[:, 0] >= self.q_limits[:, 1]):
            raise ValueError("joint limits must satisfy min < max")
        if np.any(self.qdot_limits <= 0.0):
            raise ValueError("joint speed limits must be positive")

    @property
    def dof(self) -> int:
        return self.geometry.shape[0]

    @property
    def workspace_dim(self) -> int:
        return 2 if self.kind == "planar" else 3

    def with_tool(self, tool: ToolAttachment | None) -> "KinematicChain":
        return replace(self, tool=tool)

    def bare(self) -> "KinematicChain":
        return self if self.tool is None else replace(self, tool=None)

    def reach(self) -> float:
        """Upper bound on the distance from the base to the gripper."""
        if self.kind == "planar":
            return float(np.sum(np.abs(self.geometry)))
        offsets = np.abs(self.geometry[:, 0]).sum() + np.abs(self.geometry[:, 2]).sum()
        return float(offsets + np.linalg.norm(self.flange.position))


def planar_chain(link_lengths, q_limits=None, qdot_limits=None, name="planar") -> KinematicChain:
    lengths = np.array(link_lengths, dtype=float)
    D = lengths.shape[0]
    if q_limits is None:
        q_limits = np.tile([-np.pi, np.pi], (D, 1))
    if qdot_limits is None:
        qdot_limits = np.full(D, 4.0)
    return KinematicChain(
        "planar",
        lengths,
        np.array(q_limits, dtype=float).reshape(D, 2),
        np.array(qdot_limits, dtype=float).reshape(D),
        Pose.identity(2),
        name=name,
    )


def spatial_chain(dh_rows, q_limits, qdot_limits, flange: Pose | None = None, name="spatial") -> KinematicChain:
    dh = np.array(dh_rows, dtype=float)
    if dh.ndim != 2 or dh.shape[1] != 4:
        raise DimensionError("DH table must have rows (a, alpha, d, theta_offset)")
    D = dh.shape[0]
    return KinematicChain(
        "spatial",
        dh,
        np.array(q_limits, dtype=float).reshape(D, 2),
        np.array(qdot_limits, dtype=float).reshape(D),
        flange if flange is not None else Pose.identity(3),
        name=name,
    )


# Franka-like arm: modified DH table, flange plus hand offset (0.107 + 0.1034 m, -pi/4 about z).
_SPATIAL7_DH = [
    [0.0, 0.0, 0.333, 0.0],
    [0.0, -np.pi / 2, 0.0, 0.0],
    [0.0, np.pi / 2, 0.316, 0.0],
    [0.0825, np.pi / 2, 0.0, 0.0],
    [-0.0825, -np.pi / 2, 0.384, 0.0],
    [0.0, np.pi / 2, 0.0, 0.0],
    [0.088, np.pi / 2, 0.0, 0.0],
]
_SPATIAL7_Q_LIMITS = [
    [-2.8973, 2.8973],
    [-1.7628, 1.7628],
    [-2.8973, 2.8973],
    [-3.0718, -0.0698],
    [-2.8973, 2.8973],
    [-0.0175, 3.7525],
    [-2.8973, 2.8973],
]
SPATIAL7_QDOT_LIMITS = (2.1750, 2.1750, 2.1750, 2.1750, 2.610, 2.610, 2.610)

CHAIN_PRESETS = ("planar3", "spatial7")


def chain_preset(name: str, link_lengths=None, q_limits=None, qdot_limits=None) -> KinematicChain:
    """Named chain with optional overrides."""
    if name == "planar3":
        lengths = link_lengths if link_lengths is not None else [1.0, 1.0, 1.0]
        return planar_chain(lengths, q_limits, qdot_limits, name=name)
    if name == "spatial7":
        if link_lengths is not None:
            raise ValueError("spatial7 does not take link_lengths overrides")
        flange = Pose(np.array([0.0, 0.0, 0.107 + 0.1034]), rot_z(-np.pi / 4))
        return spatial_chain(
            _SPATIAL7_DH,
            q_limits if q_limits is not None else _SPATIAL7_Q_LIMITS,
            qdot_limits if qdot_limits is not None else SPATIAL7_QDOT_LIMITS,
            flange,
            name=name,
        )
    raise KeyError(f"unknown chain preset {name!r}")


def _check_q(chain: KinematicChain, q) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    if q.shape != (chain.dof,):
        raise DimensionError(f"expected {chain.dof} joint values, got shape {q.shape}")
    return q


def joint_frames(chain: KinematicChain, q):
    """Joint origins ``(D, w)``, joint axes ``(D, 3)`` and the gripper pose (tool ignored)."""
    q = _check_q(chain, q)
    if chain.kind == "planar":
        phi = np.cumsum(q)
        steps = chain.geometry[:, None] * np.stack([np.cos(phi), np.sin(phi)], axis=1)
        ends = np.cumsum(steps, axis=0)
        origins = np.vstack([np.zeros(2), ends[:-1]])
        axes = np.tile([0.0, 0.0, 1.0], (chain.dof, 1))
        return origins, axes, Pose(ends[-1], rot2(phi[-1]))

    R = np.eye(3)
    p = np.zeros(3)
    origins = np.empty((chain.dof, 3))
    axes = np.empty((chain.dof, 3))
    for i, (a, alpha, d, offset) in enumerate(chain.geometry):
        Rx = rot_x(alpha)
        p = p + R @ np.array([a, 0.0, 0.0])
        R = R @ Rx @ rot_z(q[i] + offset)
        p = p + R @ np.array([0.0, 0.0, d])
        origins[i] = p
        axes[i] = R[:, 2]
    ee = Pose(p, R).compose(chain.flange)
    return origins, axes, ee


def forward_kinematics(chain: KinematicChain, q) -> Pose:
    """Pose of the effective end-effector (tool tip when a tool is attached)."""
    _, _, ee = joint_frames(chain, q)
    if chain.tool is not None:
        ee = ee.compose(chain.tool.grip_to_tip)
    return ee


def jacobian(chain: KinematicChain, q, full: bool = False) -> np.ndarray:
    """Geometric Jacobian of the effective end-effector.

    Positional rows only by default (``w x D``). With ``full=True`` the angular
    rows are appended: one row for planar chains, three for spatial ones.
    """
    origins, axes, ee = joint_frames(chain, q)
    if chain.tool is not None:
        ee = ee.compose(chain.tool.grip_to_tip)
    r = ee.position - origins
    if chain.kind == "planar":
        Jp = np.vstack([-r[:, 1], r[:, 0]])
        if full:
            return np.vstack([Jp, np.ones((1, chain.dof))])
        return Jp
    Jp = np.cross(axes, r).T
    if full:
        return np.vstack([Jp, axes.T])
    return Jp


def angular_jacobian(chain: KinematicChain, q) -> np.ndarray:
    """Angular-velocity rows; ``(1, D)`` for planar, ``(3, D)`` for spatial chains."""
    if chain.kind == "planar":
        return np.ones((1, chain.dof))
    _, axes, _ = joint_frames(chain, q)
    return axes.T


def attach_tool(chain: KinematicChain, grip_pose: Pose, tool_head_pose: Pose, t_attach: int) -> KinematicChain:
    """Return a copy of ``chain`` extended by a rigid tool link.

    Both poses are world-frame poses at the grasp instant; the stored transform
    is the tool head expressed in the gripper frame.
    """
    grip_pose.validate()
    tool_head_pose.validate()
    if grip_pose.dim != chain.workspace_dim or tool_head_pose.dim != chain.workspace_dim:
        raise DimensionError("tool poses must live in the chain workspace")
    if np.array_equal(grip_pose.position, tool_head_pose.position) and np.array_equal(grip_pose.rotation, tool_head_pose.rotation):
        # R'R is only identity up to rounding; keep the coincident case exact
        grip_to_tip = Pose.identity(chain.workspace_dim)
    else:
        grip_to_tip = grip_pose.inverse().compose(tool_head_pose)
    return chain.with_tool(ToolAttachment(grip_to_tip, int(t_attach)))
