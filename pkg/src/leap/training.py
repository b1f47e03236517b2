"""Inner learning process: preconditioned gradient descent and path recording."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Iterator, Optional

import numpy as np

from .errors import ConfigError, DivergenceError, NumericalError

DIVERGENCE_THRESHOLD = 1e12


@dataclass(frozen=True)
class UpdateRule:
    """Step-size schedule plus optional diagonal preconditioner.

    ``schedule`` is ``"constant"`` (step ``alpha`` every iteration) or
    ``"cosine"`` (anneals from ``alpha`` at step 0 to zero at step ``horizon``).
    """

    alpha: float
    schedule: str = "constant"
    horizon: Optional[int] = None
    preconditioner: Optional[tuple] = None

    def __post_init__(self):
        if not (self.alpha > 0 and math.isfinite(self.alpha)):
            raise ConfigError(f"alpha must be positive, got {self.alpha}", key="alpha")
        if self.schedule not in ("constant", "cosine"):
            raise ConfigError(f"unknown schedule {self.schedule!r}", key="schedule")
        if self.schedule == "cosine" and (self.horizon is None or self.horizon < 1):
            raise ConfigError("cosine schedule needs horizon >= 1", key="horizon")
        if self.preconditioner is not None:
            d = tuple(float(v) for v in self.preconditioner)
            if not all(v > 0 and math.isfinite(v) for v in d):
                raise ConfigError("diagonal preconditioner entries must be > 0", key="preconditioner")
            object.__setattr__(self, "preconditioner", d)

    def step_size(self, i: int) -> float:
        if self.schedule == "constant":
            return self.alpha
        t = min(i, self.horizon)
        return 0.5 * self.alpha * (1.0 + math.cos(math.pi * t / self.horizon))

    def precondition(self, grad: np.ndarray) -> np.ndarray:
        if self.preconditioner is None:
            return grad
        d = np.asarray(self.preconditioner)
        if d.shape != grad.shape:
            raise ConfigError(
                f"preconditioner has {d.size} entries but parameter vector has {grad.size}",
                key="preconditioner",
            )
        return d * grad


def inner_step(theta: np.ndarray, grad: np.ndarray, rule: UpdateRule, i: int) -> np.ndarray:
    """One update ``theta - alpha_i * S_i @ grad``."""
    theta = np.asarray(theta, dtype=np.float64)
    grad = np.asarray(grad, dtype=np.float64)
    if theta.shape != grad.shape:
        raise ValueError(f"shape mismatch: theta {theta.shape} vs grad {grad.shape}")
    if not (np.all(np.isfinite(theta)) and np.all(np.isfinite(grad))):
        raise NumericalError("non-finite input to inner_step", step=i)
    return theta - rule.step_size(i) * rule.precondition(grad)


@dataclass
class GradientPath:
    """Parameters ``params[0..K]``, losses ``losses[0..K]`` and gradients ``grads[0..K-1]``.

    ``losses[i]`` is the minibatch loss at ``params[i]``; ``grads[i]`` is its
    gradient on the same minibatch.  ``errors`` holds the per-step training
    error (0/1 error for classification, the loss otherwise) and
    ``full_losses`` optionally the full-dataset loss, used for metrics only.
    """

    params: np.ndarray
    losses: np.ndarray
    grads: np.ndarray
    step_sizes: np.ndarray
    errors: np.ndarray = None
    full_losses: Optional[np.ndarray] = None
    preconditioner: Optional[tuple] = None

    def __post_init__(self):
        if len(self.params) < 2:
            raise ValueError("a gradient path needs at least two snapshots")
        if len(self.losses) != len(self.params) or len(self.grads) != len(self.params) - 1:
            raise ValueError("inconsistent path lengths")
        if self.errors is None:
            self.errors = self.losses

    @property
    def num_steps(self) -> int:
        return len(self.params) - 1

    def replay_error(self) -> float:
        """Max deviation between stored snapshots and re-applied update steps."""
        d = 1.0 if self.preconditioner is None else np.asarray(self.preconditioner)
        predicted = self.params[:-1] - self.step_sizes[:, None] * d * self.grads
        return float(np.max(np.abs(predicted - self.params[1:])))

    def write_trace(self, path) -> None:
        """Dump a CSV trace with columns step,loss,grad_norm,param_norm."""
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["step", "loss", "grad_norm", "param_norm"])
            for i in range(len(self.params)):
                gn = repr(float(np.linalg.norm(self.grads[i]))) if i < len(self.grads) else ""
                w.writerow([i, repr(float(self.losses[i])), gn,
                            repr(float(np.linalg.norm(self.params[i])))])


@dataclass
class PathPoint:
    """One snapshot streamed out of :func:`iter_inner_training`.

    ``grad`` is ``None`` for the final snapshot.
    """

    step: int
    theta: np.ndarray
    loss: float
    error: float
    grad: Optional[np.ndarray] = None
    full_loss: Optional[float] = None


def _finite(v: np.ndarray) -> bool:
    # overflow of the squared norm is treated as divergence too
    return math.isfinite(float(v @ v))


def _check(loss, grad, step):
    if not math.isfinite(loss) or loss > DIVERGENCE_THRESHOLD:
        raise DivergenceError(f"loss {loss!r} diverged", step=step)
    if grad is not None and not _finite(grad):
        raise DivergenceError("non-finite gradient", step=step)


def iter_inner_training(task, theta0, rng, steps: Optional[int] = None,
                        record_full_loss: bool = False) -> Iterator[PathPoint]:
    """Stream the inner run as ``K + 1`` points; only the current point is held.

    The loss at each point is measured on the same minibatch whose gradient
    drives the next update.  The final point gets a fresh minibatch.
    """
    theta = np.array(theta0, dtype=np.float64)
    if theta.shape != (task.dim,):
        raise ValueError(f"theta0 has shape {theta.shape}, task expects ({task.dim},)")
    K = task.step_budget if steps is None else steps
    full = task.full_data() if record_full_loss else None
    rule = task.update_rule
    classify = task.is_classification
    for i in range(K + 1):
        batch = task.sample_batch(rng)
        last = i == K
        if last:
            loss = task.loss(theta, batch)
            grad = None
        else:
            loss, grad = task.loss_and_grad(theta, batch)
        _check(loss, grad, i)
        point = PathPoint(
            step=i,
            theta=theta,
            loss=loss,
            error=task.error(theta, batch) if classify else loss,
            grad=grad,
            full_loss=task.loss(theta, full) if full is not None else None,
        )
        yield point
        if not last:
            theta = theta - rule.step_size(i) * rule.precondition(grad)


def run_inner_training(task, theta0, rng, steps: Optional[int] = None,
                       record_full_loss: bool = False) -> GradientPath:
    """Train ``task`` from ``theta0`` for its step budget and record the path."""
    params, losses, grads, errors, full = [], [], [], [], []
    for pt in iter_inner_training(task, theta0, rng, steps, record_full_loss):
        params.append(pt.theta)
        losses.append(pt.loss)
        errors.append(pt.error)
        if pt.grad is not None:
            grads.append(pt.grad)
        if pt.full_loss is not None:
            full.append(pt.full_loss)
    K = len(grads)
    return GradientPath(
        params=np.array(params),
        losses=np.array(losses),
        grads=np.array(grads).reshape(K, task.dim),
        step_sizes=np.array([task.update_rule.step_size(i) for i in range(K)]),
        errors=np.array(errors),
        full_losses=np.array(full) if record_full_loss else None,
        preconditioner=task.update_rule.preconditioner,
    )
