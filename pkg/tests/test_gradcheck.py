import numpy as np
import pytest

from suturepoint.gradcheck import FAULT_ENV, grad_check, run_suite


def linear_build(tape, p):
    return tape.sum_all(tape.affine(p["x"], 3.0, 1.0))


def sigmoid_build(tape, p):
    return tape.sum_all(tape.sigmoid(tape.sigmoid(p["x"])))


def test_linear_is_nearly_exact():
    report = grad_check(linear_build, {"x": np.ones((3, 3, 1))})
    assert report.max_rel_err < 1e-10


def test_sigmoid_composition_tight():
    x = np.random.default_rng(0).normal(size=(4, 4, 1))
    report = grad_check(sigmoid_build, {"x": x}, step=1e-5)
    assert report.max_rel_err < 1e-6


def test_corrupted_gradient_is_flagged():
    x = np.random.default_rng(1).normal(size=(4, 4, 1))
    report = grad_check(sigmoid_build, {"x": x}, tolerance=1e-4,
                        analytic_scale=1.01)
    assert not report.passed
    assert report.max_rel_err > 1e-3


def test_step_must_be_positive():
    with pytest.raises(ValueError):
        grad_check(linear_build, {"x": np.ones((2, 2, 1))}, step=0.0)


def test_fault_env_hook_fails_named_case(monkeypatch):
    monkeypatch.setenv(FAULT_ENV, "relu")
    rows = run_suite(["ops"])
    by_name = {name: rep for _, name, rep in rows}
    assert not by_name["relu"].passed
    assert all(rep.passed for name, rep in by_name.items() if name != "relu")


def test_full_suite_passes():
    for scope, name, report in run_suite(["ops", "layers", "model"]):
        assert report.passed, f"{scope}/{name}: {report.max_rel_err}"
