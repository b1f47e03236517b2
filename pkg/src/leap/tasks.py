"""Task abstraction and synthetic task families.

Three families are provided, all with hand-written gradients:

* ``quadratic``      ``f(theta) = 0.5 (theta - c)^T A (theta - c)``, no data.
* ``sinusoid_mlp``   regression of ``a * sin(x + phase)`` with a one hidden
                     layer tanh MLP, mean squared error.
* ``synth_classify`` two Gaussian blobs, same MLP with a logit output and
                     binary cross-entropy.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from typing import Union

import numpy as np

from .errors import ConfigError, NumericalError
from .training import UpdateRule

FAMILIES = ("quadratic", "sinusoid_mlp", "synth_classify")


@dataclass(frozen=True, eq=False)
class QuadraticSpec:
    A: np.ndarray
    c: np.ndarray

    def __post_init__(self):
        A = np.array(self.A, dtype=np.float64)
        c = np.array(self.c, dtype=np.float64).reshape(-1)
        if A.ndim != 2 or A.shape != (c.size, c.size):
            raise ConfigError(f"A must be {c.size}x{c.size}, got shape {A.shape}", key="A")
        if np.max(np.abs(A - A.T), initial=0.0) > 1e-12:
            raise ConfigError("A is not symmetric", key="A")
        if c.size <= 64 and np.min(np.linalg.eigvalsh(A)) <= 0:
            raise ConfigError("A is not positive definite", key="A")
        A.setflags(write=False)
        c.setflags(write=False)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "c", c)


@dataclass(frozen=True)
class SinusoidSpec:
    amplitude: float
    phase: float
    hidden: int = 20
    noise_std: float = 0.0
    x_range: tuple = (-5.0, 5.0)

    def __post_init__(self):
        if not 0.1 <= self.amplitude <= 5.0:
            raise ConfigError(f"amplitude {self.amplitude} outside [0.1, 5.0]", key="amplitude")
        if self.hidden < 1:
            raise ConfigError("hidden layer size must be positive", key="hidden")
        if self.noise_std < 0:
            raise ConfigError("noise_std must be >= 0", key="noise_std")

    @property
    def layers(self):
        return (1, self.hidden, 1)


@dataclass(frozen=True)
class ClassifySpec:
    """Two isotropic Gaussian blobs at ``center +/- separation * (cos angle, sin angle, 0...)``."""

    angle: float
    separation: float = 1.0
    std: float = 1.0
    center: tuple = (0.0, 0.0)
    hidden: int = 8

    def __post_init__(self):
        if len(self.center) < 2:
            raise ConfigError("classification inputs need at least 2 dimensions", key="center")
        if self.std <= 0 or self.hidden < 1:
            raise ConfigError("std and hidden must be positive", key="std")

    @property
    def layers(self):
        return (len(self.center), self.hidden, 1)


Spec = Union[QuadraticSpec, SinusoidSpec, ClassifySpec]


# --------------------------------------------------------------------------- MLP


def mlp_size(layers) -> int:
    n_in, h, n_out = layers
    return h * n_in + h + n_out * h + n_out


def _unpack(theta, layers):
    n_in, h, n_out = layers
    i = 0
    W1 = theta[i:i + h * n_in].reshape(h, n_in)
    i += h * n_in
    b1 = theta[i:i + h]
    i += h
    W2 = theta[i:i + n_out * h].reshape(n_out, h)
    i += n_out * h
    b2 = theta[i:i + n_out]
    return W1, b1, W2, b2


def mlp_forward(theta, layers, x):
    """Returns ``(output, hidden_activations)``; ``x`` has shape (m, n_in)."""
    W1, b1, W2, b2 = _unpack(theta, layers)
    a = np.tanh(x @ W1.T + b1)
    return a @ W2.T + b2, a


def mlp_backward(theta, layers, x, a, dout):
    """Backprop ``dout = dL/d(output)`` into a flat parameter gradient."""
    W1, b1, W2, b2 = _unpack(theta, layers)
    gW2 = dout.T @ a
    gb2 = dout.sum(axis=0)
    dz = (dout @ W2) * (1.0 - a * a)
    gW1 = dz.T @ x
    gb1 = dz.sum(axis=0)
    return np.concatenate([gW1.ravel(), gb1, gW2.ravel(), gb2])


def _softplus(z):
    return np.logaddexp(0.0, z)


def _sigmoid(z):
    return np.exp(-_softplus(-z))


# -------------------------------------------------------------------------- Task


@dataclass(frozen=True, eq=False)
class Task:
    """A learning problem: objective, data sampler, update rule and step budget."""

    objective_id: str
    params: Spec
    data_seed: int
    update_rule: UpdateRule
    step_budget: int
    batch_size: int = 20
    dataset_size: int = 200
    full_batch: bool = False

    def __post_init__(self):
        if self.objective_id not in FAMILIES:
            raise ConfigError(f"unknown task family {self.objective_id!r}", key="family")
        expected = {"quadratic": QuadraticSpec, "sinusoid_mlp": SinusoidSpec,
                    "synth_classify": ClassifySpec}[self.objective_id]
        if not isinstance(self.params, expected):
            raise ConfigError(f"{self.objective_id} task needs {expected.__name__} params")
        if self.step_budget < 1:
            raise ConfigError("step_budget must be >= 1", key="steps")
        if self.batch_size < 1 or self.dataset_size < 1:
            raise ConfigError("batch_size and dataset_size must be >= 1", key="batch_size")

    @property
    def dim(self) -> int:
        if self.objective_id == "quadratic":
            return self.params.c.size
        return mlp_size(self.params.layers)

    @property
    def is_classification(self) -> bool:
        return self.objective_id == "synth_classify"

    @cached_property
    def dataset(self):
        """Fixed per-task dataset ``(x, y)``; ``None`` for quadratics."""
        if self.objective_id == "quadratic":
            return None
        rng = np.random.default_rng(self.data_seed)
        m = self.dataset_size
        if self.objective_id == "sinusoid_mlp":
            s = self.params
            x = rng.uniform(s.x_range[0], s.x_range[1], size=(m, 1))
            y = s.amplitude * np.sin(x + s.phase)
            if s.noise_std > 0:
                y = y + s.noise_std * rng.standard_normal(y.shape)
            return x, y
        s = self.params
        d = len(s.center)
        labels = rng.integers(0, 2, size=m)
        direction = np.zeros(d)
        direction[:2] = np.cos(s.angle), np.sin(s.angle)
        means = np.asarray(s.center) + np.outer(2 * labels - 1, s.separation * direction)
        x = means + s.std * rng.standard_normal((m, d))
        return x, labels.astype(np.float64).reshape(-1, 1)

    def full_data(self):
        return self.dataset

    def sample_batch(self, rng):
        """Minibatch drawn with replacement, or the whole dataset in full-batch mode."""
        data = self.dataset
        if data is None or self.full_batch:
            return data
        idx = rng.integers(0, len(data[0]), size=self.batch_size)
        return data[0][idx], data[1][idx]

    # ------------------------------------------------------------ objective

    def loss_and_grad(self, theta, batch):
        theta = np.asarray(theta, dtype=np.float64)
        if theta.shape != (self.dim,):
            raise ValueError(f"theta has shape {theta.shape}, task expects ({self.dim},)")
        if self.objective_id == "quadratic":
            r = theta - self.params.c
            g = self.params.A @ r
            loss = 0.5 * float(r @ g)
        else:
            x, y = batch
            layers = self.params.layers
            out, a = mlp_forward(theta, layers, x)
            m = len(x)
            if self.objective_id == "sinusoid_mlp":
                resid = out - y
                loss = float(np.mean(resid ** 2))
                dout = 2.0 * resid / m
            else:
                loss = float(np.mean(_softplus(out) - y * out))
                dout = (_sigmoid(out) - y) / m
            g = mlp_backward(theta, layers, x, a, dout)
        if not (math.isfinite(loss) and math.isfinite(float(g @ g))):
            raise NumericalError(f"non-finite loss/gradient on {self.objective_id} task")
        return loss, g

    def loss(self, theta, batch) -> float:
        theta = np.asarray(theta, dtype=np.float64)
        if self.objective_id == "quadratic":
            r = theta - self.params.c
            return 0.5 * float(r @ self.params.A @ r)
        x, y = batch
        out, _ = mlp_forward(theta, self.params.layers, x)
        if self.objective_id == "sinusoid_mlp":
            return float(np.mean((out - y) ** 2))
        return float(np.mean(_softplus(out) - y * out))

    def error(self, theta, batch) -> float:
        """0/1 error for classification, the loss itself otherwise."""
        if not self.is_classification:
            return self.loss(theta, batch)
        x, y = batch
        out, _ = mlp_forward(np.asarray(theta, dtype=np.float64), self.params.layers, x)
        return float(np.mean((out > 0).astype(np.float64) != y))

    def init_params(self, rng) -> np.ndarray:
        """Random initialization: N(0, 1/fan_in) weights, zero biases (N(0, 1) for quadratics)."""
        if self.objective_id == "quadratic":
            return rng.standard_normal(self.dim)
        n_in, h, n_out = self.params.layers
        W1 = rng.standard_normal((h, n_in)) / np.sqrt(n_in)
        W2 = rng.standard_normal((n_out, h)) / np.sqrt(h)
        return np.concatenate([W1.ravel(), np.zeros(h), W2.ravel(), np.zeros(n_out)])


def loss_and_grad(task: Task, theta, data_batch):
    """Minibatch loss and gradient of ``task`` at ``theta``."""
    return task.loss_and_grad(theta, data_batch)


# ---------------------------------------------------------------- distributions


@dataclass(frozen=True)
class TaskDistribution:
    """Uniform distribution over a finite set of tasks."""

    tasks: tuple
    replace: bool = True

    def __post_init__(self):
        object.__setattr__(self, "tasks", tuple(self.tasks))

    def __len__(self):
        return len(self.tasks)


def sample_task_batch(dist: TaskDistribution, B: int, rng) -> list:
    """Draw ``B`` tasks uniformly, with or without replacement per ``dist.replace``."""
    if len(dist) == 0:
        raise ConfigError("task distribution is empty", key="tasks")
    if B < 1:
        raise ConfigError(f"batch size must be >= 1, got {B}", key="batch_size")
    if dist.replace:
        idx = rng.integers(0, len(dist), size=B)
    else:
        if B > len(dist):
            raise ConfigError(
                f"cannot draw {B} tasks without replacement from {len(dist)}", key="batch_size")
        idx = rng.permutation(len(dist))[:B]
    return [dist.tasks[i] for i in idx]


def random_spd(dim, rng, eig_range=(0.2, 1.0)):
    """Random SPD matrix with eigenvalues uniform in ``eig_range``."""
    q, _ = np.linalg.qr(rng.standard_normal((dim, dim)))
    lam = rng.uniform(*eig_range, size=dim)
    A = (q * lam) @ q.T
    return 0.5 * (A + A.T)


def quadratic_tasks(count, dim, rng, *, alpha=0.5, steps=10, eig_range=(0.2, 1.0),
                    center_scale=1.0, seed_offset=0) -> list:
    """Random convex quadratics; full-batch by construction."""
    out = []
    for k in range(count):
        spec = QuadraticSpec(A=random_spd(dim, rng, eig_range),
                             c=center_scale * rng.standard_normal(dim))
        out.append(Task("quadratic", spec, data_seed=seed_offset + k,
                        update_rule=UpdateRule(alpha), step_budget=steps, full_batch=True))
    return out


def sinusoid_tasks(count, rng, *, hidden=20, alpha=0.01, steps=20, batch_size=10,
                   dataset_size=200, noise_std=0.0, amplitude_range=(0.1, 5.0),
                   phase_range=(0.0, np.pi), full_batch=False, seed_offset=0) -> list:
    """Sinusoid regression tasks with amplitude and phase drawn uniformly."""
    out = []
    for k in range(count):
        spec = SinusoidSpec(amplitude=float(rng.uniform(*amplitude_range)),
                            phase=float(rng.uniform(*phase_range)),
                            hidden=hidden, noise_std=noise_std)
        out.append(Task("sinusoid_mlp", spec, data_seed=seed_offset + k,
                        update_rule=UpdateRule(alpha), step_budget=steps,
                        batch_size=batch_size, dataset_size=dataset_size, full_batch=full_batch))
    return out


def classify_tasks(count, rng, *, dim=2, hidden=8, separation=1.5, std=1.0, alpha=0.1,
                   steps=20, batch_size=20, dataset_size=200, full_batch=False,
                   seed_offset=0) -> list:
    """Two-blob classification tasks that differ by the orientation of the class axis."""
    out = []
    for k in range(count):
        spec = ClassifySpec(angle=float(rng.uniform(0, 2 * np.pi)), separation=separation,
                            std=std, center=tuple([0.0] * dim), hidden=hidden)
        out.append(Task("synth_classify", spec, data_seed=seed_offset + k,
                        update_rule=UpdateRule(alpha), step_budget=steps,
                        batch_size=batch_size, dataset_size=dataset_size, full_batch=full_batch))
    return out
