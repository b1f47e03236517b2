import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from leap.errors import ConfigError
from leap.geometry import (GeometryConfig, ManifoldPoint, PullForwardAccumulator, path_distance,
                           path_meta_gradient, pull_forward_increment, segment_norm,
                           segment_norms, stabilizer_value)
from leap.tasks import sinusoid_tasks
from leap.training import GradientPath, run_inner_training
from leap.verify import fd_segment_gradient, relative_error

from conftest import quad

P2_LOSS = GeometryConfig(p=2, include_loss=True, stabilize=False)


def test_segment_norm_examples():
    a, b = ManifoldPoint([0.0], 0.0), ManifoldPoint([3.0], 4.0)
    assert segment_norm(a, b, include_loss=True) == 5.0
    assert segment_norm(a, b, include_loss=False) == 3.0
    assert segment_norm(a, a) == 0.0
    with pytest.raises(ValueError):
        ManifoldPoint([np.inf], 0.0)


def _path(params, losses):
    params = np.asarray(params, dtype=float).reshape(len(params), -1)
    return GradientPath(params, np.asarray(losses, dtype=float),
                        np.zeros((len(params) - 1, params.shape[1])), np.ones(len(params) - 1))


def test_path_distance_examples():
    path = _path([0.0, 0.5], [0.5, 0.125])
    assert path_distance(path, P2_LOSS) == pytest.approx(0.390625)
    assert path_distance(path, GeometryConfig(p=1)) == pytest.approx(0.625)
    assert path_distance(_path([1.0, 1.0, 1.0], [2.0, 2.0, 2.0]), GeometryConfig()) == 0.0


def test_increment_examples():
    args = (np.array([0.0]), 0.5, np.array([-1.0]), np.array([0.5]), 0.125)
    assert pull_forward_increment(*args, P2_LOSS) == pytest.approx([-1.75])
    no_loss = GeometryConfig(p=2, include_loss=False, stabilize=False)
    assert pull_forward_increment(*args, no_loss) == pytest.approx([-1.0])


def test_stabilizer_flips_ascent():
    theta, g, psi = np.array([0.0]), np.array([-1.0]), np.array([0.5])
    stab = GeometryConfig(p=2, include_loss=True, stabilize=True)
    # ascent: f goes 0.5 -> 0.7; the stabilized increment sees -0.2
    got = pull_forward_increment(theta, 0.5, g, psi, 0.7, stab)
    want = pull_forward_increment(theta, 0.5, g, psi, 0.3, P2_LOSS)
    assert got == pytest.approx(want)
    # descent is untouched
    assert pull_forward_increment(theta, 0.5, g, psi, 0.3, stab) == pytest.approx(want)


def test_stabilizer_value_examples():
    assert stabilizer_value(1.0, 0.8) == 0.0
    assert stabilizer_value(1.0, 1.2) == pytest.approx(-0.08)
    assert stabilizer_value(1.0, 1.0) == 0.0


def test_zero_segment():
    th = np.array([0.3, 0.4])
    for p in (1, 2):
        inc = pull_forward_increment(th, 1.0, np.ones(2), th, 1.0, GeometryConfig(p=p))
        assert np.all(inc == 0.0)


def test_no_loss_p2_is_twice_the_step():
    rng = np.random.default_rng(0)
    th, psi = rng.standard_normal(4), rng.standard_normal(4)
    inc = pull_forward_increment(th, 1.0, rng.standard_normal(4), psi, 3.0,
                                 GeometryConfig(p=2, include_loss=False, stabilize=False))
    assert inc == pytest.approx(2 * (th - psi))


def test_config_validation():
    with pytest.raises(ConfigError):
        GeometryConfig(p=3)


@pytest.mark.parametrize("p", [1, 2])
@pytest.mark.parametrize("include_loss", [True, False])
def test_increment_matches_finite_differences(p, include_loss):
    cfg = GeometryConfig(p=p, include_loss=include_loss, stabilize=False)
    rng = np.random.default_rng(10 * p + include_loss)
    for task in [quad(np.diag([1.0, 2.0, 0.5]), [1.0, -1.0, 0.0], alpha=0.1)] + \
            sinusoid_tasks(3, rng, hidden=4):
        theta = task.init_params(rng)
        batch = task.sample_batch(rng)
        f, g = task.loss_and_grad(theta, batch)
        psi = theta - 0.1 * g + 0.01 * rng.standard_normal(task.dim)
        f_next = task.loss(psi, batch) + 0.05
        inc = pull_forward_increment(theta, f, g, psi, f_next, cfg)
        fd = fd_segment_gradient(task, batch, theta, psi, f_next, cfg, 1e-6)
        assert relative_error(inc, fd) < 1e-5


def test_streaming_accumulator_matches_stored_path():
    task = sinusoid_tasks(1, np.random.default_rng(0), hidden=5, steps=12)[0]
    path = run_inner_training(task, task.init_params(np.random.default_rng(1)),
                              np.random.default_rng(2))
    for cfg in (GeometryConfig(), P2_LOSS, GeometryConfig(p=1, include_loss=False)):
        acc = PullForwardAccumulator(task.dim, cfg)
        for i in range(len(path.params)):
            acc.push(path.params[i], path.losses[i], path.grads[i] if i < path.num_steps else None)
        assert np.allclose(acc.grad, path_meta_gradient(path, cfg), rtol=1e-12, atol=1e-14)
        assert acc.distance == pytest.approx(path_distance(path, cfg), rel=1e-12)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**31), scale=st.floats(0.1, 10.0))
def test_distance_scaling(seed, scale):
    rng = np.random.default_rng(seed)
    params, losses = rng.standard_normal((6, 3)), rng.standard_normal(6)
    d1 = path_distance(_path(params, losses), GeometryConfig(p=1))
    d2 = path_distance(_path(params, losses), P2_LOSS)
    s1 = path_distance(_path(scale * params, scale * losses), GeometryConfig(p=1))
    s2 = path_distance(_path(scale * params, scale * losses), P2_LOSS)
    assert s1 == pytest.approx(scale * d1, rel=1e-10)
    assert s2 == pytest.approx(scale ** 2 * d2, rel=1e-10)
    # length bounds: straight chord <= d1, and Cauchy-Schwarz d1^2 <= K d2
    chord = math.sqrt(np.sum((params[-1] - params[0]) ** 2) + (losses[-1] - losses[0]) ** 2)
    assert chord <= d1 + 1e-12
    assert d1 ** 2 <= 5 * d2 + 1e-9
    assert np.sum(segment_norms(params, losses)) == pytest.approx(d1)
