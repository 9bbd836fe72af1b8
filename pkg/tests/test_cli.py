import csv
import json

import pytest

from admm_ilqr import cli
from admm_ilqr.admm import solve as real_solve
from admm_ilqr.scenario import dump_scenario, get_preset


def _run(argv, capsys):
    rc = cli.main(argv)
    out = capsys.readouterr()
    return rc, out.out, out.err


def test_run_writes_tables_and_plot(tmp_path, capsys):
    rc, out, _ = _run(["run", "--scenario", "fig3a-1", "--out", str(tmp_path)], capsys)
    assert rc == 0 and "fig3a-1" in out
    rows = list(csv.reader((tmp_path / "trajectory.csv").open()))
    assert rows[0] == ["t", "q_0", "q_1", "q_2", "p_x", "p_y", "u_0", "u_1", "u_2"]
    assert len(rows) == 102 and rows[-1][-3:] == ["", "", ""]
    report = json.loads((tmp_path / "report.json").read_text())
    assert "timing_s" not in report and report["status"] in ("converged", "max_iterations")
    hist = list(csv.DictReader((tmp_path / "history.csv").open()))
    assert len(hist) == report["outer_iterations"]
    assert (tmp_path / "plot.svg").read_text().lstrip().startswith("<?xml")
    assert sorted(p.name for p in tmp_path.iterdir() if p.name.startswith(".")) == []


def test_run_from_yaml_file(tmp_path, capsys):
    f = tmp_path / "s.yaml"
    f.write_text(dump_scenario(get_preset("fig3a-1")))
    rc, _, _ = _run(["run", "--scenario", str(f), "--out", str(tmp_path / "o"), "--format", "table"], capsys)
    assert rc == 0 and not (tmp_path / "o" / "plot.svg").exists()


def test_parse_error_exit_code(tmp_path, capsys):
    f = tmp_path / "bad.yaml"
    f.write_text("name: x\nwidth: 3\n")
    rc, _, err = _run(["run", "--scenario", str(f)], capsys)
    assert rc == 1 and "width" in err


def test_unknown_scenario_and_usage_errors(capsys):
    assert _run(["run", "--scenario", "nope"], capsys)[0] == 1
    assert _run(["frobnicate"], capsys)[0] == 1
    assert _run(["compare", "--scenario", "fig4-pickplace", "--modes", ","], capsys)[0] == 1
    assert _run(["compare", "--scenario", "fig4-pickplace", "--modes", "fast"], capsys)[0] == 1
    assert _run(["run", "--scenario", "fig3a-1", "--seed", "1"], capsys)[0] == 1


def test_solver_abort_exit_code(tmp_path, capsys, monkeypatch):
    def aborting(sc):
        r = real_solve(sc)
        r.status, r.message = "aborted", "forced"
        return r

    monkeypatch.setattr(cli, "solve", aborting)
    rc, _, err = _run(["run", "--scenario", "fig3a-1", "--out", str(tmp_path), "--format", "table"], capsys)
    assert rc == 2 and "forced" in err


def test_compare_table(tmp_path, capsys):
    rc, out, _ = _run(
        ["compare", "--scenario", "fig4-pickplace", "--modes", "none,directional", "--seeds", "0",
         "--out", str(tmp_path), "--max-threads", "2"],
        capsys,
    )
    assert rc == 0
    rows = list(csv.DictReader((tmp_path / "compare.csv").open()))
    assert [(r["mode"], r["seed"]) for r in rows] == [("none", "0"), ("directional", "0")]
    assert all(float(r["alpha"]) > 0 for r in rows)
    assert "beats none in" in out


def test_parse_seeds():
    assert cli.parse_seeds("0-3") == [0, 1, 2, 3]
    assert cli.parse_seeds("1,4, 7") == [1, 4, 7]
    with pytest.raises(cli.UsageError):
        cli.parse_seeds(",")


def test_presets_command(capsys):
    rc, out, _ = _run(["presets"], capsys)
    assert rc == 0 and "hammer-sim" in out
    rc, out, _ = _run(["presets", "--show", "fig3a-2"], capsys)
    assert rc == 0 and out.startswith("name: fig3a-2")


def test_check_passes(capsys):
    rc, out, _ = _run(["check", "--suite", "lqr", "--suite", "geometry"], capsys)
    assert rc == 0 and out.count("PASS") == 2


def test_check_detects_corrupted_gradient(capsys):
    # negative control: a sign flip in one term must be caught
    def flip(kind, g):
        return -g if kind == "orientation" else g

    rc = cli.run_check(["gradient"], grad_hook=flip)
    out = capsys.readouterr().out
    assert rc == 1 and out.startswith("FAIL gradient") and "orientation" in out


def test_atomic_write_replaces(tmp_path):
    f = tmp_path / "a" / "x.txt"
    cli.write_atomic(f, "one")
    cli.write_atomic(f, "two")
    assert f.read_text() == "two" and len(list(f.parent.iterdir())) == 1
