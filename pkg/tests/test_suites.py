import numpy as np

from admm_ilqr.oracle import OracleConfig
from admm_ilqr.suites import SUITES, gradient_suite, kinematics_suite, projection_suite, run_suites


def test_all_suites_pass_quickly_at_small_size():
    for name, fn in SUITES.items():
        res = fn(OracleConfig(trials=5, seed=1))
        assert res.passed, res.line()
        assert res.line().startswith("PASS")


def test_kinematics_suite_default():
    assert kinematics_suite().passed


def test_gradient_suite_negative_control():
    res = gradient_suite(OracleConfig(trials=5), grad_hook=lambda kind, g: g * (1.01 if kind == "position" else 1.0))
    assert not res.passed and "position" in res.detail


def test_projection_suite_catches_bad_projector(monkeypatch):
    from admm_ilqr import suites

    monkeypatch.setattr(suites, "project_box", lambda v, lo, hi: np.clip(v, lo, hi) * 0.99)
    res = projection_suite(OracleConfig(trials=10))
    assert not res.passed


def test_run_suites_subset():
    out = run_suites(["lqr"], seed=2)
    assert [r.name for r in out] == ["lqr"] and out[0].passed
