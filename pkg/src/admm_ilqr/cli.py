"""Command-line front end: ``run``, ``compare``, ``check`` and ``presets``."""
from __future__ import annotations

import argparse
import json
import logging
import os
import statistics
import sys
import tempfile
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .admm import solve
from .errors import ScenarioParseError, ValidationError
from .scenario import (
    MAN_MODES,
    builtin_presets,
    dump_scenario,
    get_preset,
    load_scenario,
    preset_names,
    randomize_targets,
    to_problem,
    validate,
    with_mode,
)

EXIT_OK, EXIT_INPUT, EXIT_ABORT = 0, 1, 2

log = logging.getLogger("admm_ilqr")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # usage mistakes share the input-error exit code; 2 is reserved for solver aborts
    def error(self, message):
        raise UsageError(message)


def _fmt(v) -> str:
    return format(float(v), ".17g")


def write_atomic(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        return float(obj)
    return obj


# --- scenario resolution ------------------------------------------------------------


def resolve_scenario(ref: str, seed=None, mode=None):
    """A scenario from a file path or a preset name, optionally re-seeded and re-moded."""
    path = Path(ref)
    if path.is_file():
        sc = load_scenario(path.read_text())
    elif ref in preset_names():
        sc = validate(get_preset(ref))
    else:
        raise ValidationError(f"no scenario file or preset named {ref!r}", "scenario")
    if seed is not None:
        if sc.randomize is None:
            raise ValidationError("scenario has no randomize block, so --seed has no effect", "randomize")
        sc = randomize_targets(sc, seed)
    if mode is not None:
        sc = with_mode(sc, mode)
    return validate(sc)


# --- table writers -------------------------------------------------------------------------


def trajectory_table(report) -> str:
    tr = report.trajectory
    D, w = tr.q.shape[1], tr.p.shape[1]
    header = ["t"] + [f"q_{i}" for i in range(D)] + ["p_x", "p_y", "p_z"][:w] + [f"u_{i}" for i in range(D)]
    lines = [",".join(header)]
    for t in range(tr.q.shape[0]):
        u = [_fmt(v) for v in tr.u[t]] if t < tr.T else [""] * D
        lines.append(",".join([str(t)] + [_fmt(v) for v in tr.q[t]] + [_fmt(v) for v in tr.p[t]] + u))
    return "\n".join(lines) + "\n"


def history_table(report) -> str:
    lines = ["k_i,r_p,r_d,cost,ilqr_iterations"]
    for h in report.residual_history:
        lines.append(f"{h['k_i']},{_fmt(h['r_p'])},{_fmt(h['r_d'])},{_fmt(h['cost'])},{h['ilqr_iterations']}")
    return "\n".join(lines) + "\n"


def report_record(sc, report) -> dict:
    """Everything about a solve except wall-clock timing (kept out for byte-stable output)."""
    last = report.residual_history[-1] if report.residual_history else {}
    return _plain(
        {
            "scenario": sc.name,
            "seed": sc.seed,
            "manipulability_mode": sc.manipulability_mode,
            "status": report.status,
            "message": report.message,
            "outer_iterations": report.outer_iterations,
            "final_r_p": last.get("r_p"),
            "final_r_d": last.get("r_d"),
            "cost_breakdown": report.breakdown,
            "constraints": report.constraints,
            "manipulability": {k: v for k, v in report.manipulability.items() if k != "ellipsoid"},
            "flags": report.flags,
            "history": report.residual_history,
        }
    )


def ellipsoid_record(report) -> dict:
    rec = dict(report.manipulability.get("ellipsoid", {}))
    rec["weighted"] = True
    rec["timestep"] = report.trajectory.T
    return _plain(rec)


# --- plotting ---------------------------------------------------------------------------------


def _mpl():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    plt.rcParams["svg.hashsalt"] = "admm-ilqr"
    return plt


def _save_svg(fig, path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".svg")
    os.close(fd)
    fig.savefig(tmp, format="svg", metadata={"Date": None, "Creator": None})
    os.replace(tmp, path)


def plot_run(sc, report, path: Path) -> bool:
    """Arm snapshots (initial, pick, final), grasp box, target and the final ellipse. 2-D only."""
    from matplotlib.patches import Ellipse, Polygon

    from .chain import joint_frames
    from .costs import effective_chain
    from .chain import forward_kinematics

    problem = to_problem(sc)
    if problem.chain.workspace_dim != 2:
        return False
    plt = _mpl()
    tr, chain = report.trajectory, report.chain
    fig, ax = plt.subplots(figsize=(6, 6))
    box = problem.constraints.state_box
    if box is not None:
        corners = np.array([[-1, -1], [1, -1], [1, 1], [-1, 1]]) * box.half_extents
        ax.add_patch(Polygon(box.center + corners @ box.rotation.T, closed=True, color="tab:cyan", alpha=0.4, label="grasp range"))
    ax.plot(tr.p[:, 0], tr.p[:, 1], color="0.6", lw=1, ls="--", label="gripper path")
    for t, color, label in ((0, "0.75", "initial"), (problem.t_pick, "tab:blue", "pick"), (tr.T, "tab:red", "final")):
        origins, _, ee = joint_frames(chain.bare(), tr.q[t])
        pts = np.vstack([origins, ee.position])
        ax.plot(pts[:, 0], pts[:, 1], "-o", color=color, lw=3, ms=4, label=label)
        eff = effective_chain(chain, t)
        if eff.tool is not None:
            tip = forward_kinematics(eff, tr.q[t]).position
            ax.plot([ee.position[0], tip[0]], [ee.position[1], tip[1]], color=color, lw=5, alpha=0.35)
    for term in problem.terms:
        if term.kind == "position":
            ax.plot(*term.params["target"], marker="x", color="k", ms=10, mew=2, ls="", label="target")
            break
    ell = report.manipulability.get("ellipsoid")
    if ell:
        vals, vecs = np.array(ell["eigenvalues"]), np.array(ell["eigenvectors"])
        scale = 0.5 / np.sqrt(max(vals.max(), 1e-12))
        angle = np.degrees(np.arctan2(vecs[-1][1], vecs[-1][0]))
        ax.add_patch(
            Ellipse(ell["center"], 2 * scale * np.sqrt(max(vals[-1], 0)), 2 * scale * np.sqrt(max(vals[0], 0)),
                    angle=angle, fill=False, color="tab:green", lw=2, label="velocity ellipse (scaled)")
        )
    ax.set_aspect("equal")
    ax.grid(alpha=0.3)
    ax.set_title(f"{sc.name}: {report.status}")
    ax.legend(loc="best", fontsize=8)
    _save_svg(fig, path)
    plt.close(fig)
    return True


def plot_compare(rows, modes, path: Path) -> None:
    plt = _mpl()
    fig, ax = plt.subplots(figsize=(6, 4))
    data = [[r["alpha"] for r in rows if r["mode"] == m and r["alpha"] is not None] for m in modes]
    ax.boxplot(data)
    ax.set_xticks(range(1, len(modes) + 1), modes)
    ax.set_ylabel("directional velocity projection at T")
    ax.grid(alpha=0.3)
    _save_svg(fig, path)
    plt.close(fig)


# --- commands ------------------------------------------------------------------------------------


def cmd_run(args) -> int:
    sc = resolve_scenario(args.scenario, args.seed, args.mode)
    report = solve(sc)
    out = Path(args.out)
    if args.format in ("table", "both"):
        write_atomic(out / "trajectory.csv", trajectory_table(report))
        write_atomic(out / "history.csv", history_table(report))
        write_atomic(out / "report.json", json.dumps(report_record(sc, report), indent=2, sort_keys=True) + "\n")
        write_atomic(out / "ellipsoid.json", json.dumps(ellipsoid_record(report), indent=2, sort_keys=True) + "\n")
        write_atomic(out / "scenario.yaml", dump_scenario(sc))
    if args.format in ("plot", "both"):
        if not plot_run(sc, report, out / "plot.svg"):
            log.warning("plots are only drawn for planar scenarios")
    c = report.constraints
    line = f"{sc.name}: {report.status} after {report.outer_iterations} outer iterations"
    if "final_position_error" in c:
        line += f", final error {c['final_position_error']:.3e} m"
    for via in c.get("via", []):
        if "nominal_distance" in via:
            line += f", via distance {via['nominal_distance']:.3e} m"
    if "alpha" in report.manipulability:
        line += f", alpha {report.manipulability['alpha']:.6g}"
    print(line)
    if report.status == "aborted":
        print(f"solver aborted: {report.message}", file=sys.stderr)
        return EXIT_ABORT
    return EXIT_OK


def _compare_cell(sc, mode, seed):
    cell = with_mode(randomize_targets(sc, seed), mode)
    report = solve(cell)
    row = {"mode": mode, "seed": seed, "status": report.status, "alpha": None, "final_position_error": None}
    if report.status != "aborted":
        row["alpha"] = report.manipulability.get("alpha")
        row["final_position_error"] = report.constraints.get("final_position_error")
    return row


def parse_seeds(text: str) -> list:
    seeds = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        if "-" in part[1:]:
            lo, hi = part.split("-", 1)
            seeds.extend(range(int(lo), int(hi) + 1))
        else:
            seeds.append(int(part))
    if not seeds:
        raise UsageError("--seeds selects no seeds")
    return seeds


def compare_table(rows) -> str:
    lines = ["mode,seed,status,alpha,final_position_error"]
    for r in rows:
        a = "" if r["alpha"] is None else _fmt(r["alpha"])
        e = "" if r["final_position_error"] is None else _fmt(r["final_position_error"])
        lines.append(f"{r['mode']},{r['seed']},{r['status']},{a},{e}")
    return "\n".join(lines) + "\n"


def cmd_compare(args) -> int:
    modes = [m.strip() for m in args.modes.split(",") if m.strip()]
    if not modes:
        raise UsageError("--modes must name at least one mode")
    bad = [m for m in modes if m not in MAN_MODES]
    if bad:
        raise UsageError(f"unknown modes {bad} (known: {', '.join(MAN_MODES)})")
    seeds = parse_seeds(args.seeds)
    sc = resolve_scenario(args.scenario)
    if sc.randomize is None:
        raise ValidationError("compare needs a scenario with a randomize block", "randomize")
    cells = [(m, s) for m in modes for s in seeds]
    workers = max(1, min(args.max_threads or os.cpu_count() or 1, len(cells)))
    if workers == 1:
        rows = [_compare_cell(sc, m, s) for m, s in cells]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(_compare_cell, sc, m, s) for m, s in cells]
            rows = [f.result() for f in futures]
    out = Path(args.out)
    if args.format in ("table", "both"):
        write_atomic(out / "compare.csv", compare_table(rows))
    if args.format in ("plot", "both"):
        plot_compare(rows, modes, out / "compare.svg")
    for line in summarize(rows, modes):
        print(line)
    return EXIT_OK if any(r["alpha"] is not None for r in rows) else EXIT_ABORT


def summarize(rows, modes) -> list:
    by = {(r["mode"], r["seed"]): r["alpha"] for r in rows}
    seeds = sorted({r["seed"] for r in rows})
    out = []
    for m in modes:
        vals = [by[(m, s)] for s in seeds if by.get((m, s)) is not None]
        med = statistics.median(vals) if vals else float("nan")
        line = f"{m:12s} median alpha {med:.6g} over {len(vals)}/{len(seeds)} seeds"
        if m != "none" and "none" in modes:
            wins = sum(1 for s in seeds if by.get((m, s)) is not None and by.get(("none", s)) is not None
                       and by[(m, s)] > by[("none", s)])
            line += f", beats none in {wins}/{len(seeds)}"
        out.append(line)
    return out


def run_check(names=None, seed: int = 0, grad_hook=None, stream=None) -> int:
    from .suites import run_suites

    stream = stream or sys.stdout
    results = run_suites(names, seed=seed, grad_hook=grad_hook)
    for r in results:
        print(r.line(), file=stream)
    return EXIT_OK if all(r.passed for r in results) else EXIT_INPUT


def cmd_check(args) -> int:
    return run_check(args.suite, args.seed or 0)


def cmd_presets(args) -> int:
    if args.show:
        if args.show not in preset_names():
            raise ValidationError(f"unknown preset {args.show!r}", "presets")
        sys.stdout.write(dump_scenario(get_preset(args.show)))
        return EXIT_OK
    for p in builtin_presets():
        print(f"{p.name:16s} {p.description}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    from .suites import SUITES

    p = _Parser(prog="admm-ilqr", description="Tool-affordance motion planning with ADMM-constrained batch iLQR.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    r = sub.add_parser("run", help="solve one scenario and export tables and plots")
    r.add_argument("--scenario", required=True, help="scenario YAML file or preset name")
    r.add_argument("--out", default="out")
    r.add_argument("--seed", type=int, default=None, help="re-place grasp box and target from this seed")
    r.add_argument("--mode", choices=MAN_MODES, default=None, help="override the manipulability mode")
    r.add_argument("--format", choices=("table", "plot", "both"), default="both")
    r.add_argument("--max-threads", type=int, default=None)
    r.set_defaults(func=cmd_run)

    c = sub.add_parser("compare", help="alpha at T per manipulability mode and seed")
    c.add_argument("--scenario", required=True)
    c.add_argument("--modes", default="none,directional,determinant,tracking", help="comma-separated modes")
    c.add_argument("--seeds", default="0-9", help="e.g. 0-9 or 1,4,7")
    c.add_argument("--out", default="out")
    c.add_argument("--format", choices=("table", "plot", "both"), default="table")
    c.add_argument("--max-threads", type=int, default=None, help="parallel worker processes")
    c.set_defaults(func=cmd_compare)

    k = sub.add_parser("check", help="run the oracle cross-check suites")
    k.add_argument("--suite", action="append", choices=tuple(SUITES), help="repeatable; default runs all")
    k.add_argument("--seed", type=int, default=0)
    k.set_defaults(func=cmd_check)

    s = sub.add_parser("presets", help="list built-in scenarios")
    s.add_argument("--show", metavar="NAME", help="print a preset as a scenario document")
    s.set_defaults(func=cmd_presets)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (ScenarioParseError, ValidationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
