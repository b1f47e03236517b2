import numpy as np
import pytest

from leap.errors import ConfigError
from leap.tasks import (QuadraticSpec, SinusoidSpec, TaskDistribution, classify_tasks,
                        loss_and_grad, quadratic_tasks, sample_task_batch, sinusoid_tasks)
from leap.verify import fd_gradient, relative_error

from conftest import quad


def test_quadratic_loss_examples(unit_quad):
    f, g = loss_and_grad(unit_quad, np.array([0.0]), None)
    assert f == 0.5 and g == pytest.approx([-1.0])
    f, g = loss_and_grad(unit_quad, np.array([1.0]), None)
    assert f == 0.0 and np.all(g == 0.0)


def test_quadratic_spec_validation():
    with pytest.raises(ConfigError):
        QuadraticSpec([[1.0, 0.1], [0.0, 1.0]], [0.0, 0.0])
    with pytest.raises(ConfigError):
        QuadraticSpec([[1.0, 0.0], [0.0, -1.0]], [0.0, 0.0])
    with pytest.raises(ConfigError):
        QuadraticSpec([[1.0]], [0.0, 0.0])


def test_sinusoid_spec_validation():
    with pytest.raises(ConfigError):
        SinusoidSpec(amplitude=6.0, phase=0.0)


@pytest.mark.parametrize("family", ["quadratic", "sinusoid_mlp", "synth_classify"])
def test_gradients_match_finite_differences(family):
    rng = np.random.default_rng(4)
    if family == "quadratic":
        tasks = quadratic_tasks(3, 6, rng)
    elif family == "sinusoid_mlp":
        tasks = sinusoid_tasks(3, rng, hidden=6)
    else:
        tasks = classify_tasks(3, rng, hidden=4)
    for task in tasks:
        theta = task.init_params(rng) + 0.2 * rng.standard_normal(task.dim)
        batch = task.sample_batch(rng)
        _, g = task.loss_and_grad(theta, batch)
        fd = fd_gradient(lambda t: task.loss(t, batch), theta, 1e-6)
        assert relative_error(g, fd) < 1e-5


def test_same_seed_same_stream():
    a = sinusoid_tasks(2, np.random.default_rng(0))[1]
    b = sinusoid_tasks(2, np.random.default_rng(0))[1]
    theta = a.init_params(np.random.default_rng(2))
    for k in range(3):
        fa, ga = a.loss_and_grad(theta, a.sample_batch(np.random.default_rng(k)))
        fb, gb = b.loss_and_grad(theta, b.sample_batch(np.random.default_rng(k)))
        assert fa == fb and ga.tobytes() == gb.tobytes()


def test_classification_error_is_01():
    task = classify_tasks(1, np.random.default_rng(0))[0]
    e = task.error(task.init_params(np.random.default_rng(0)), task.sample_batch(np.random.default_rng(0)))
    assert 0.0 <= e <= 1.0
    assert task.is_classification


def test_sample_task_batch():
    one = TaskDistribution([quad([[1.0]], [0.0])])
    batch = sample_task_batch(one, 3, np.random.default_rng(0))
    assert len(batch) == 3 and all(t is one.tasks[0] for t in batch)

    tasks = sinusoid_tasks(20, np.random.default_rng(1))
    dist = TaskDistribution(tasks, replace=False)
    perm = sample_task_batch(dist, 20, np.random.default_rng(2))
    assert sorted(map(id, perm)) == sorted(map(id, tasks))

    d2 = TaskDistribution(tasks)
    a = sample_task_batch(d2, 5, np.random.default_rng(7))
    b = sample_task_batch(d2, 5, np.random.default_rng(7))
    assert [id(t) for t in a] == [id(t) for t in b]


def test_sample_task_batch_errors():
    with pytest.raises(ConfigError):
        sample_task_batch(TaskDistribution([]), 1, np.random.default_rng(0))
    dist = TaskDistribution(sinusoid_tasks(3, np.random.default_rng(0)), replace=False)
    with pytest.raises(ConfigError):
        sample_task_batch(dist, 4, np.random.default_rng(0))
