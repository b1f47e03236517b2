import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from leap.errors import ConfigError, DivergenceError, NumericalError
from leap.tasks import sinusoid_tasks
from leap.training import UpdateRule, inner_step, run_inner_training

from conftest import quad


def test_inner_step_examples():
    assert inner_step(np.array([0.0]), np.array([-1.0]), UpdateRule(0.5), 0) == pytest.approx([0.5])
    th = np.array([0.3, -2.0])
    assert np.array_equal(inner_step(th, np.zeros(2), UpdateRule(0.5), 0), th)
    rule = UpdateRule(0.1, preconditioner=(2.0,))
    assert inner_step(np.array([0.0]), np.array([1.0]), rule, 0) == pytest.approx([-0.2])


def test_inner_step_rejects_nonfinite():
    with pytest.raises(NumericalError):
        inner_step(np.array([np.nan]), np.array([1.0]), UpdateRule(0.1), 0)


def test_update_rule_validation():
    with pytest.raises(ConfigError):
        UpdateRule(0.0)
    with pytest.raises(ConfigError):
        UpdateRule(0.1, schedule="cosine")
    with pytest.raises(ConfigError):
        UpdateRule(0.1, preconditioner=(1.0, -1.0))
    with pytest.raises(ConfigError):
        UpdateRule(0.1, preconditioner=(1.0, 1.0)).precondition(np.ones(3))


def test_cosine_endpoints():
    rule = UpdateRule(0.4, schedule="cosine", horizon=10)
    assert rule.step_size(0) == pytest.approx(0.4)
    assert rule.step_size(5) == pytest.approx(0.2)
    assert rule.step_size(10) == pytest.approx(0.0, abs=1e-15)
    assert rule.step_size(25) == pytest.approx(0.0, abs=1e-15)


def test_unit_quadratic_path(unit_quad):
    path = run_inner_training(unit_quad, np.array([0.0]), np.random.default_rng(0))
    assert path.params[:, 0] == pytest.approx([0.0, 0.5, 0.75, 0.875], abs=1e-15)
    assert path.losses == pytest.approx([0.5, 0.125, 0.03125, 0.0078125])
    assert path.grads[:, 0] == pytest.approx([-1.0, -0.5, -0.25])
    assert path.replay_error() <= 1e-12


def test_start_at_minimum_is_constant(unit_quad):
    path = run_inner_training(unit_quad, np.array([1.0]), np.random.default_rng(0))
    assert np.all(path.params == 1.0)
    assert np.all(path.losses == 0.0)


def test_full_batch_paths_are_bitwise_repeatable():
    task = sinusoid_tasks(1, np.random.default_rng(3), full_batch=True)[0]
    theta = task.init_params(np.random.default_rng(1))
    a = run_inner_training(task, theta, np.random.default_rng(5))
    b = run_inner_training(task, theta, np.random.default_rng(99))
    assert a.params.tobytes() == b.params.tobytes()
    assert a.losses.tobytes() == b.losses.tobytes()


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**31), alpha=st.floats(1e-3, 0.05),
       schedule=st.sampled_from(["constant", "cosine"]))
def test_minibatch_paths_replay(seed, alpha, schedule):
    rng = np.random.default_rng(seed)
    task = sinusoid_tasks(1, rng, hidden=5, steps=8, alpha=alpha)[0]
    from dataclasses import replace
    task = replace(task, update_rule=UpdateRule(alpha, schedule, 8 if schedule == "cosine" else None))
    path = run_inner_training(task, task.init_params(rng), rng)
    assert path.num_steps == 8
    assert path.replay_error() <= 1e-12


@settings(max_examples=30, deadline=None)
@given(a=st.floats(0.1, 3.0), alpha=st.floats(0.01, 0.6), K=st.integers(1, 15),
       th=st.floats(-5, 5), c=st.floats(-5, 5))
def test_quadratic_path_closed_form(a, alpha, K, th, c):
    path = run_inner_training(quad([[a]], [c], alpha=alpha, steps=K), np.array([th]),
                              np.random.default_rng(0))
    expect = c + (th - c) * (1 - alpha * a) ** np.arange(K + 1)
    assert np.allclose(path.params[:, 0], expect, rtol=1e-12, atol=1e-12)


def test_divergence_raises():
    task = quad([[1.0]], [0.0], alpha=3.0, steps=200)
    with pytest.raises(DivergenceError):
        run_inner_training(task, np.array([1.0]), np.random.default_rng(0))


def test_write_trace(tmp_path, unit_quad):
    path = run_inner_training(unit_quad, np.array([0.0]), np.random.default_rng(0))
    out = tmp_path / "trace.csv"
    path.write_trace(out)
    lines = out.read_bytes().split(b"\n")
    assert lines[0] == b"step,loss,grad_norm,param_norm"
    assert len([l for l in lines if l]) == 5
    assert b"\r" not in out.read_bytes()
