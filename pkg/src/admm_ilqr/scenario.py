"""Scenario documents, built-in presets and target randomization.

Scenarios are YAML documents whose keys carry their units (``dt_s``,
``control_upper_rad_per_s`` ...). Loading validates every field and rejects
unknown keys; :func:`dump_scenario` writes a document that loads back to an
identical :class:`Scenario`.
"""
from __future__ import annotations

import dataclasses
import math
import re
from dataclasses import dataclass, field, fields, replace

import numpy as np
import yaml

from . import costs as cost_mod
from .admm import ConstraintSet, OrientedBox, Problem, SolverSettings
from .chain import CHAIN_PRESETS, Pose, chain_preset, forward_kinematics, rot2, rot_z
from .errors import ScenarioParseError, ValidationError

MAN_MODES = ("none", "directional", "determinant", "tracking")
SCENARIO_COST_KINDS = ("position", "orientation", "direction", "joint_limit")
UNIT_TOL = 1e-6


@dataclass(frozen=True)
class ChainSpec:
    preset: str = "planar3"
    link_lengths_m: tuple | None = None
    q_limits_rad: tuple | None = None
    qdot_limits_rad_per_s: tuple | None = None


@dataclass(frozen=True)
class BoxSpec:
    center_m: tuple
    half_extents_m: tuple
    yaw_rad: float = 0.0


@dataclass(frozen=True)
class ConstraintSpec:
    control_lower_rad_per_s: tuple
    control_upper_rad_per_s: tuple
    grasp_box: BoxSpec | None = None
    halfspaces: tuple = ()


@dataclass(frozen=True)
class CostSpec:
    kind: str
    weight: float
    schedule: object = "final"


@dataclass(frozen=True)
class Targets:
    final_position_m: tuple | None = None
    final_direction: tuple | None = None
    tool_axis: tuple | None = None
    handle_axis_local: tuple | None = None
    task_direction: tuple | None = None
    desired_major: float | None = None
    desired_minor: float | None = None
    desired_matrix: tuple | None = None
    tool_head_local_m: tuple | None = None
    tool_head_yaw_rad: float = 0.0


@dataclass(frozen=True)
class RandomizeSpec:
    box_radius_m: tuple = (1.5, 2.5)
    box_bearing_rad: tuple = (-math.pi, math.pi)
    box_yaw_rad: tuple = (-math.pi, math.pi)
    box_height_m: tuple = (0.0, 0.0)
    target_radius_m: tuple = (1.5, 2.5)
    target_bearing_rad: tuple = (-math.pi, math.pi)
    target_height_m: tuple = (0.0, 0.0)


@dataclass(frozen=True)
class Scenario:
    name: str
    chain: ChainSpec
    horizon_steps: int
    dt_s: float
    t_pick_step: int
    q0_rad: tuple
    constraints: ConstraintSpec
    costs: tuple
    targets: Targets = Targets()
    manipulability_mode: str = "none"
    manipulability_weight: float = 0.0
    solver: SolverSettings = SolverSettings()
    randomize: RandomizeSpec | None = None
    seed: int = 0


# --- (de)serialization --------------------------------------------------------------

_NESTED = {
    "chain": ChainSpec,
    "constraints": ConstraintSpec,
    "grasp_box": BoxSpec,
    "targets": Targets,
    "solver": SolverSettings,
    "randomize": RandomizeSpec,
}


def _plain(value):
    if dataclasses.is_dataclass(value):
        return {f.name: _plain(getattr(value, f.name)) for f in fields(value)}
    if isinstance(value, tuple):
        return [_plain(v) for v in value]
    if isinstance(value, (np.floating,)):
        return float(value)
    return value


def scenario_to_dict(sc: Scenario) -> dict:
    return _plain(sc)


def dump_scenario(sc: Scenario) -> str:
    return yaml.safe_dump(scenario_to_dict(sc), sort_keys=False, default_flow_style=None, width=120)


def _tuplify(value):
    if isinstance(value, list):
        return tuple(_tuplify(v) for v in value)
    return value


def _build(cls, data, path, lines):
    if not isinstance(data, dict):
        raise ScenarioParseError("expected a mapping", lines.get(path), path or "<root>")
    names = {f.name: f for f in fields(cls)}
    kwargs = {}
    for key, value in data.items():
        sub = f"{path}.{key}" if path else key
        if key not in names:
            raise ScenarioParseError("unknown key", lines.get(sub), sub)
        if key in _NESTED and value is not None:
            kwargs[key] = _build(_NESTED[key], value, sub, lines)
        elif key == "costs":
            if not isinstance(value, list):
                raise ScenarioParseError("costs must be a list", lines.get(sub), sub)
            kwargs[key] = tuple(_build(CostSpec, v, f"{sub}[{i}]", lines) for i, v in enumerate(value))
        else:
            kwargs[key] = _tuplify(value)
    try:
        return cls(**kwargs)
    except TypeError as exc:
        raise ScenarioParseError(f"missing or invalid fields: {exc}", lines.get(path), path or "<root>") from None


def _node_lines(node, path, lines):
    """Map dotted key paths to 1-based source lines."""
    if isinstance(node, yaml.MappingNode):
        for key_node, value_node in node.value:
            sub = f"{path}.{key_node.value}" if path else key_node.value
            lines[sub] = key_node.start_mark.line + 1
            _node_lines(value_node, sub, lines)
    elif isinstance(node, yaml.SequenceNode):
        for i, item in enumerate(node.value):
            sub = f"{path}[{i}]"
            lines[sub] = item.start_mark.line + 1
            _node_lines(item, sub, lines)


class _Loader(yaml.SafeLoader):
    pass


# YAML 1.1 reads "1e-5" as a string; accept exponent floats without a dot.
_Loader.add_implicit_resolver(
    "tag:yaml.org,2002:float",
    re.compile(r"^[-+]?(?:[0-9][0-9_]*)(?:\.[0-9_]*)?[eE][-+]?[0-9]+$"),
    list("-+0123456789"),
)


def load_scenario(source: str) -> Scenario:
    """Parse and validate a scenario document (YAML text)."""
    try:
        node = yaml.compose(source, Loader=_Loader)
        data = yaml.load(source, Loader=_Loader)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        raise ScenarioParseError(f"invalid document: {getattr(exc, 'problem', exc)}", mark.line + 1 if mark else None) from None
    lines: dict = {}
    if node is not None:
        _node_lines(node, "", lines)
    sc = _build(Scenario, data if data is not None else {}, "", lines)
    try:
        validate(sc)
    except ValidationError as exc:
        exc.line = lines.get(exc.field)
        raise
    return sc


# --- validation ---------------------------------------------------------------------


def _require(cond, field, msg):
    if not cond:
        raise ValidationError(msg, field)


def _vec(value, n, field, unit=False):
    _require(value is not None, field, "is required")
    try:
        arr = np.array(value, dtype=float)
    except (TypeError, ValueError):
        raise ValidationError("must be numeric", field) from None
    _require(arr.shape == (n,), field, f"must have {n} entries")
    _require(np.all(np.isfinite(arr)), field, "must be finite")
    if unit:
        _require(abs(np.linalg.norm(arr) - 1.0) <= UNIT_TOL, field, "must be a unit vector")
    return arr


def resolve_schedule(schedule, T: int, t_pick: int):
    if schedule == "all":
        return None
    if schedule == "final":
        return frozenset({T})
    if schedule == "pick":
        return frozenset({t_pick})
    if isinstance(schedule, (tuple, list)) and all(isinstance(t, int) for t in schedule):
        return frozenset(schedule)
    raise ValidationError("must be 'all', 'final', 'pick' or a list of timesteps", "costs.schedule")


def build_chain(sc: Scenario):
    c = sc.chain
    return chain_preset(c.preset, c.link_lengths_m, c.q_limits_rad, c.qdot_limits_rad_per_s)


def validate(sc: Scenario) -> Scenario:
    _require(isinstance(sc.name, str) and sc.name, "name", "must be a nonempty string")
    _require(sc.chain.preset in CHAIN_PRESETS, "chain.preset", f"unknown preset (known: {', '.join(CHAIN_PRESETS)})")
    try:
        chain = build_chain(sc)
    except (ValueError, KeyError) as exc:
        raise ValidationError(str(exc), "chain") from None
    D, w = chain.dof, chain.workspace_dim
    _require(isinstance(sc.horizon_steps, int) and sc.horizon_steps >= 2, "horizon_steps", "must be an integer >= 2")
    T = sc.horizon_steps
    _require(isinstance(sc.dt_s, (int, float)) and sc.dt_s > 0, "dt_s", "must be > 0")
    _require(isinstance(sc.t_pick_step, int) and 0 < sc.t_pick_step < T, "t_pick_step", "must lie strictly between 0 and horizon_steps")
    _vec(sc.q0_rad, D, "q0_rad")

    cs = sc.constraints
    lo = _vec(cs.control_lower_rad_per_s, D, "constraints.control_lower_rad_per_s")
    hi = _vec(cs.control_upper_rad_per_s, D, "constraints.control_upper_rad_per_s")
    _require(np.all(lo < hi), "constraints.control_upper_rad_per_s", "must exceed the lower bounds")
    if cs.grasp_box is not None:
        _vec(cs.grasp_box.center_m, w, "constraints.grasp_box.center_m")
        h = _vec(cs.grasp_box.half_extents_m, w, "constraints.grasp_box.half_extents_m")
        _require(np.all(h >= 5e-4), "constraints.grasp_box.half_extents_m", "must be >= 5e-4 m")
    for i, hs in enumerate(cs.halfspaces):
        f = f"constraints.halfspaces[{i}]"
        _require(isinstance(hs, tuple) and len(hs) == 3, f, "must be [normal, lower, upper]")
        a = _vec(hs[0], w, f)
        _require(np.linalg.norm(a) > 0, f, "normal must be nonzero")
        _require(hs[1] <= hs[2], f, "lower must not exceed upper")

    tg = sc.targets
    for i, c in enumerate(sc.costs):
        f = f"costs[{i}]"
        _require(c.kind in SCENARIO_COST_KINDS, f"{f}.kind", f"must be one of {SCENARIO_COST_KINDS}")
        _require(isinstance(c.weight, (int, float)) and c.weight >= 0, f"{f}.weight", "must be >= 0")
        sched = resolve_schedule(c.schedule, T, sc.t_pick_step)
        if sched is not None:
            _require(all(0 <= t <= T for t in sched), f"{f}.schedule", "timesteps must lie in [0, horizon_steps]")
        if c.kind == "position":
            _vec(tg.final_position_m, w, "targets.final_position_m")
        if c.kind == "direction":
            _vec(tg.final_direction, w, "targets.final_direction", unit=True)
            if tg.tool_axis is not None:
                _vec(tg.tool_axis, w, "targets.tool_axis", unit=True)
        if c.kind == "orientation":
            _require(cs.grasp_box is not None, "constraints.grasp_box", "orientation cost needs a grasp box")
            if tg.handle_axis_local is not None:
                _vec(tg.handle_axis_local, w, "targets.handle_axis_local", unit=True)

    _require(sc.manipulability_mode in MAN_MODES, "manipulability_mode", f"must be one of {MAN_MODES}")
    _require(sc.manipulability_weight >= 0, "manipulability_weight", "must be >= 0")
    if tg.task_direction is not None:
        _vec(tg.task_direction, w, "targets.task_direction", unit=True)
    if sc.manipulability_mode in ("directional", "tracking"):
        _vec(tg.task_direction, w, "targets.task_direction", unit=True)
    if sc.manipulability_mode == "tracking":
        if tg.desired_matrix is not None:
            M = np.array(tg.desired_matrix, dtype=float)
            _require(M.shape == (w, w) and np.allclose(M, M.T) and np.linalg.eigvalsh(M).min() > 0,
                     "targets.desired_matrix", "must be a symmetric positive definite matrix")
        else:
            _require(tg.desired_major is not None and tg.desired_minor is not None
                     and tg.desired_major > tg.desired_minor > 0,
                     "targets.desired_major", "tracking needs desired_major > desired_minor > 0 or desired_matrix")
    if tg.tool_head_local_m is not None:
        _require(cs.grasp_box is not None, "targets.tool_head_local_m", "a tool needs a grasp box")
        _vec(tg.tool_head_local_m, w, "targets.tool_head_local_m")

    s = sc.solver
    for name in ("k_max_admm", "k_max_ilqr"):
        _require(isinstance(getattr(s, name), int) and getattr(s, name) >= 1, f"solver.{name}", "must be a positive integer")
    for name in ("c_max", "r_p_max", "r_d_max", "q_r", "r_r", "alpha_min"):
        _require(isinstance(getattr(s, name), (int, float)) and getattr(s, name) >= 0, f"solver.{name}", "must be >= 0")
    _require(isinstance(s.min_ilqr_iterations, int) and s.min_ilqr_iterations >= 0, "solver.min_ilqr_iterations", "must be a nonnegative integer")
    for name in ("printed_formula", "skip_first_state_penalty"):
        _require(isinstance(getattr(s, name), bool), f"solver.{name}", "must be true or false")
    _require(s.control_weight > 0 or s.r_r > 0, "solver.control_weight", "control_weight + r_r must be positive")
    _require(isinstance(sc.seed, int), "seed", "must be an integer")
    return sc


# --- conversion to a solvable problem -----------------------------------------------


def _rotation(yaw: float, w: int) -> np.ndarray:
    return rot2(yaw) if w == 2 else rot_z(yaw)


def _unit(v):
    v = np.array(v, dtype=float)
    return v / np.linalg.norm(v)


def grasp_box(sc: Scenario, w: int) -> OrientedBox | None:
    b = sc.constraints.grasp_box
    if b is None:
        return None
    return OrientedBox(np.array(b.center_m, dtype=float), _rotation(b.yaw_rad, w), np.array(b.half_extents_m, dtype=float))


def to_problem(sc: Scenario) -> Problem:
    validate(sc)
    chain = build_chain(sc)
    w = chain.workspace_dim
    T, tp = sc.horizon_steps, sc.t_pick_step
    box = grasp_box(sc, w)
    cs = sc.constraints
    constraints = ConstraintSet(
        np.array(cs.control_lower_rad_per_s, dtype=float),
        np.array(cs.control_upper_rad_per_s, dtype=float),
        box,
        (tp,) if (box is not None or cs.halfspaces) else (),
        tuple((np.array(a, dtype=float), float(l), float(u)) for a, l, u in cs.halfspaces),
    )
    tg = sc.targets
    terms = []
    for c in sc.costs:
        sched = resolve_schedule(c.schedule, T, tp)
        params = {}
        if c.kind == "position":
            params["target"] = np.array(tg.final_position_m, dtype=float)
        elif c.kind == "direction":
            params["target_direction"] = _unit(tg.final_direction)
            params["tool_axis"] = None if tg.tool_axis is None else _unit(tg.tool_axis)
        elif c.kind == "orientation":
            local = np.eye(w)[:, 0] if tg.handle_axis_local is None else _unit(tg.handle_axis_local)
            params["handle_axis"] = _unit(box.rotation @ local)
        terms.append(cost_mod.CostTerm(c.kind, float(c.weight), sched, params))

    task_dir = None if tg.task_direction is None else _unit(tg.task_direction)
    if sc.manipulability_mode != "none":
        params = {}
        if sc.manipulability_mode == "directional":
            params["direction"] = task_dir
        elif sc.manipulability_mode == "tracking":
            if tg.desired_matrix is not None:
                params["desired"] = np.array(tg.desired_matrix, dtype=float)
            else:
                params["desired"] = cost_mod.make_desired_ellipsoid(task_dir, tg.desired_major, tg.desired_minor)
        kind = cost_mod.MAN_KINDS[sc.manipulability_mode]
        terms.append(cost_mod.CostTerm(kind, float(sc.manipulability_weight), frozenset({T}), params))

    tool_head = None
    if tg.tool_head_local_m is not None:
        local = Pose(np.array(tg.tool_head_local_m, dtype=float), _rotation(tg.tool_head_yaw_rad, w))
        tool_head = Pose(box.center, box.rotation).compose(local)

    return Problem(
        chain=chain,
        q0=np.array(sc.q0_rad, dtype=float),
        horizon=T,
        dt=float(sc.dt_s),
        t_pick=tp,
        constraints=constraints,
        terms=tuple(terms),
        settings=sc.solver,
        tool_head=tool_head,
        task_direction=task_dir,
        name=sc.name,
    )


# --- randomization ------------------------------------------------------------------

MAX_SAMPLES = 1000


def _sample_point(rng, radius, bearing, height, w, reach, fixed=None):
    for _ in range(MAX_SAMPLES):
        r = rng.uniform(*radius)
        b = rng.uniform(*bearing)
        if w == 2:
            p = np.array([r * np.cos(b), r * np.sin(b)])
        else:
            p = np.array([r * np.cos(b), r * np.sin(b), rng.uniform(*height)])
        if np.linalg.norm(p) <= reach:
            return p
    raise ValueError("no reachable placement found after 1000 samples")


def randomize_targets(sc: Scenario, seed: int) -> Scenario:
    """Deterministically re-place the grasp box and the final target from ``seed``."""
    if sc.randomize is None or sc.constraints.grasp_box is None:
        raise ValueError(f"scenario {sc.name!r} has no randomizable target region")
    chain = build_chain(sc)
    w = chain.workspace_dim
    reach = chain.reach()
    rz = sc.randomize
    rng = np.random.default_rng(seed)
    center = _sample_point(rng, rz.box_radius_m, rz.box_bearing_rad, rz.box_height_m, w, reach)
    yaw = float(rng.uniform(*rz.box_yaw_rad))
    target = _sample_point(rng, rz.target_radius_m, rz.target_bearing_rad, rz.target_height_m, w, reach)
    box = replace(sc.constraints.grasp_box, center_m=tuple(float(v) for v in center), yaw_rad=yaw)
    targets = sc.targets
    if targets.final_position_m is not None:
        targets = replace(targets, final_position_m=tuple(float(v) for v in target))
    return replace(
        sc,
        constraints=replace(sc.constraints, grasp_box=box),
        targets=targets,
        seed=int(seed),
        name=f"{sc.name}@{seed}",
    )


def with_mode(sc: Scenario, mode: str, weight: float | None = None) -> Scenario:
    if mode not in MAN_MODES:
        raise ValueError(f"unknown manipulability mode {mode!r}")
    return replace(sc, manipulability_mode=mode, manipulability_weight=sc.manipulability_weight if weight is None else weight)


# --- presets --------------------------------------------------------------------------

PLANAR_BOX = BoxSpec(center_m=(1.6, 1.2), half_extents_m=(0.7, 0.1), yaw_rad=0.0)


def _planar_base(name, costs, targets=Targets(), q0=(1.3, -1.0, 0.0)):
    return Scenario(
        name=name,
        chain=ChainSpec("planar3", (1.0, 1.0, 1.0)),
        horizon_steps=100,
        dt_s=0.01,
        t_pick_step=50,
        q0_rad=q0,
        constraints=ConstraintSpec((-4.0, -4.0, -4.0), (4.0, 4.0, 4.0), PLANAR_BOX),
        costs=tuple(costs),
        targets=targets,
        solver=SolverSettings(q_r=1e1, r_r=1e-3, control_weight=1e-5),
    )


def _fig3a(index: int) -> Scenario:
    costs = [CostSpec("position", 1e2, "final")]
    targets = Targets(final_position_m=(0.0, 2.4))
    if index in (2, 4):
        costs.append(CostSpec("direction", 1e2, "final"))
        targets = replace(targets, final_direction=(0.0, 1.0))
    if index in (3, 4):
        costs.append(CostSpec("orientation", 1e2, "pick"))
    return _planar_base(f"fig3a-{index}", costs, targets)


def _fig4_pickplace() -> Scenario:
    base = _planar_base(
        "fig4-pickplace",
        [CostSpec("position", 1e2, "final"), CostSpec("orientation", 1e2, "pick")],
        Targets(
            final_position_m=(-1.2, 1.6),
            tool_head_local_m=(0.9, 0.0),
            task_direction=(0.0, -1.0),
            desired_major=9.0,
            desired_minor=1.0,
        ),
    )
    return replace(
        base,
        manipulability_mode="directional",
        manipulability_weight=1e0,
        solver=SolverSettings(q_r=1e-1, r_r=1e-2, control_weight=1e-5),
        randomize=RandomizeSpec(
            box_radius_m=(1.8, 2.4),
            box_bearing_rad=(0.3, 0.8),
            box_yaw_rad=(-0.4, 0.4),
            target_radius_m=(1.6, 2.6),
            target_bearing_rad=(1.2, 2.0),
        ),
    )


FRANKA_READY = (0.0, -math.pi / 4, 0.0, -3 * math.pi / 4, 0.0, math.pi / 2, math.pi / 4)


def _spatial7_range() -> Scenario:
    return Scenario(
        name="spatial7-range",
        chain=ChainSpec("spatial7"),
        horizon_steps=100,
        dt_s=0.06,
        t_pick_step=50,
        q0_rad=FRANKA_READY,
        constraints=ConstraintSpec(
            (-3.0,) * 7, (3.0,) * 7, BoxSpec(center_m=(0.45, 0.35, 0.1), half_extents_m=(0.5, 0.5, 0.5))
        ),
        costs=(CostSpec("position", 1e1, "final"), CostSpec("direction", 1e0, "final")),
        targets=Targets(final_position_m=(0.4, -0.4, 0.4), final_direction=(0.0, 0.0, -1.0), tool_axis=(0.0, 0.0, 1.0)),
        solver=SolverSettings(q_r=1e0, r_r=1e-3, control_weight=1e-5),
    )


def _hammer_sim() -> Scenario:
    qdot = (2.1750,) * 4 + (2.610,) * 3
    return Scenario(
        name="hammer-sim",
        chain=ChainSpec("spatial7", qdot_limits_rad_per_s=qdot),
        horizon_steps=100,
        dt_s=0.06,
        t_pick_step=50,
        q0_rad=FRANKA_READY,
        constraints=ConstraintSpec(
            tuple(-v for v in qdot), qdot,
            BoxSpec(center_m=(0.5, 0.25, 0.2), half_extents_m=(0.09, 5e-4, 5e-4), yaw_rad=0.3),
        ),
        costs=(
            CostSpec("position", 1e2, "final"),
            CostSpec("orientation", 1e1, "pick"),
            CostSpec("direction", 1e1, "final"),
            CostSpec("joint_limit", 1e0, "all"),
        ),
        targets=Targets(
            final_position_m=(0.45, -0.3, 0.35),
            final_direction=(0.0, 0.0, -1.0),
            tool_axis=(0.0, 1.0, 0.0),
            tool_head_local_m=(0.2, 0.0, 0.0),
            task_direction=(0.0, 0.0, -1.0),
            desired_major=2.0,
            desired_minor=0.5,
        ),
        manipulability_mode="directional",
        manipulability_weight=1e-1,
        solver=SolverSettings(q_r=1e-1, r_r=1e-3, control_weight=1e-5),
        randomize=RandomizeSpec(
            box_radius_m=(0.35, 0.6),
            box_bearing_rad=(-0.2, 1.0),
            box_yaw_rad=(-0.6, 0.6),
            box_height_m=(0.1, 0.3),
            target_radius_m=(0.35, 0.6),
            target_bearing_rad=(-1.2, -0.2),
            target_height_m=(0.3, 0.45),
        ),
    )


_PRESETS = {
    "fig3a-1": lambda: _fig3a(1),
    "fig3a-2": lambda: _fig3a(2),
    "fig3a-3": lambda: _fig3a(3),
    "fig3a-4": lambda: _fig3a(4),
    "fig4-pickplace": _fig4_pickplace,
    "spatial7-range": _spatial7_range,
    "hammer-sim": _hammer_sim,
}


@dataclass(frozen=True)
class Preset:
    name: str
    scenario: Scenario
    description: str = ""


_DESCRIPTIONS = {
    "fig3a-1": "planar 3-link: reach the handle range at t'=T/2, then a final position",
    "fig3a-2": "planar 3-link: range plus final position and end-effector direction",
    "fig3a-3": "planar 3-link: range with grasp orientation, then final position",
    "fig3a-4": "planar 3-link: range with grasp orientation, final position and direction",
    "fig4-pickplace": "planar 3-link pick-and-place with the tool as an extra link and manipulability costs",
    "spatial7-range": "7-axis arm: cube range of size 1 at t'=T/2, final position and direction",
    "hammer-sim": "7-axis arm: grasp a hammer handle, bring the head above a nail",
}


def builtin_presets() -> list:
    return [Preset(name, validate(make()), _DESCRIPTIONS[name]) for name, make in _PRESETS.items()]


def get_preset(name: str) -> Scenario:
    if name not in _PRESETS:
        raise KeyError(f"unknown preset {name!r} (known: {', '.join(_PRESETS)})")
    return _PRESETS[name]()


def preset_names() -> tuple:
    return tuple(_PRESETS)
