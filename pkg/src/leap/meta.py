"""Meta-learners over initializations: Leap plus Reptile, FOMAML and baselines.

All learners share :func:`train_batch`, which runs one inner training per
task from the current initialization.  Each run gets a private generator
seeded by ``(step_seed, task_index, task.data_seed)`` so the result does not
depend on thread scheduling, and per-task results are combined in task
order.
"""

from __future__ import annotations

import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, List, Optional

import numpy as np

from .errors import ConfigError, DivergenceError
from .geometry import GeometryConfig, PullForwardAccumulator
from .metrics import RunRecord, auc
from .tasks import TaskDistribution, sample_task_batch
from .training import GradientPath, iter_inner_training

log = logging.getLogger(__name__)

METHODS = ("leap", "reptile", "fomaml", "joint", "no_pretraining")


@dataclass(frozen=True)
class AdamConfig:
    lr: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


@dataclass(frozen=True)
class MetaConfig:
    geometry: GeometryConfig = field(default_factory=GeometryConfig)
    beta: float = 0.1
    batch_size: int = 5
    meta_steps: int = 100
    optimizer: str = "sgd"
    adam: AdamConfig = field(default_factory=AdamConfig)
    early_stop_tol: Optional[float] = None
    snapshot_every: int = 0
    threads: int = 1
    keep_paths: bool = False

    def __post_init__(self):
        if not self.beta > 0:
            raise ConfigError(f"beta must be positive, got {self.beta}", key="beta")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1", key="batch_size")
        if self.meta_steps < 0:
            raise ConfigError("meta_steps must be >= 0", key="steps")
        if self.optimizer not in ("sgd", "adam"):
            raise ConfigError(f"unknown meta optimizer {self.optimizer!r}", key="optimizer")
        if self.threads < 1:
            raise ConfigError("threads must be >= 1", key="threads")


@dataclass
class MetaState:
    theta0: np.ndarray
    accum: Optional[np.ndarray] = None
    step: int = 0
    m: Optional[np.ndarray] = None
    v: Optional[np.ndarray] = None
    last: Optional["BatchResult"] = field(default=None, repr=False)

    def __post_init__(self):
        self.theta0 = np.array(self.theta0, dtype=np.float64)
        if self.accum is None:
            self.accum = np.zeros_like(self.theta0)


@dataclass
class TaskResult:
    index: int
    meta_grad: Optional[np.ndarray] = None
    final_theta: Optional[np.ndarray] = None
    distance: float = 0.0
    mean_loss: float = 0.0
    initial_loss: float = 0.0
    final_loss: float = 0.0
    heldout_grad: Optional[np.ndarray] = None
    path: Optional[GradientPath] = None
    error: Optional[str] = None

    @property
    def dropped(self) -> bool:
        return self.error is not None


@dataclass
class BatchResult:
    tasks: List[TaskResult]

    @property
    def ok(self) -> List[TaskResult]:
        return [t for t in self.tasks if not t.dropped]

    def mean(self, name: str) -> float:
        ok = self.ok
        return float(np.mean([getattr(t, name) for t in ok])) if ok else float("nan")


@dataclass
class MetaRecord:
    step: int
    mean_distance: float
    meta_grad_norm: float
    mean_loss: float
    mean_final_loss: float
    dropped: int
    theta0: Optional[np.ndarray] = field(default=None, repr=False)


# ------------------------------------------------------------------ inner runs


def task_rng(step_seed: int, index: int, task) -> np.random.Generator:
    return np.random.default_rng([step_seed, index, task.data_seed])


def _draw_seed(rng) -> int:
    return int(rng.integers(0, 2 ** 63 - 1))


def _run_one(task, index, theta0, geometry, step_seed, keep_path, heldout_grad) -> TaskResult:
    rng = task_rng(step_seed, index, task)
    acc = PullForwardAccumulator(theta0.size, geometry)
    pts = [] if keep_path else None
    first = last = None
    try:
        for pt in iter_inner_training(task, theta0, rng):
            acc.push(pt.theta, pt.loss, pt.grad)
            if first is None:
                first = pt
            last = pt
            if keep_path:
                pts.append(pt)
        hg = None
        if heldout_grad:
            _, hg = task.loss_and_grad(last.theta, task.sample_batch(rng))
    except DivergenceError as exc:
        log.warning("task %d dropped from meta batch: %s", index, exc)
        return TaskResult(index=index, error=str(exc))
    path = None
    if keep_path:
        path = GradientPath(
            params=np.array([p.theta for p in pts]),
            losses=np.array([p.loss for p in pts]),
            grads=np.array([p.grad for p in pts[:-1]]),
            step_sizes=np.array([task.update_rule.step_size(i) for i in range(len(pts) - 1)]),
            errors=np.array([p.error for p in pts]),
            preconditioner=task.update_rule.preconditioner,
        )
    return TaskResult(
        index=index,
        meta_grad=acc.grad,
        final_theta=last.theta,
        distance=acc.distance,
        mean_loss=acc.loss_sum / acc.count,
        initial_loss=first.loss,
        final_loss=last.loss,
        heldout_grad=hg,
        path=path,
    )


def train_batch(theta0, batch, geometry: GeometryConfig, step_seed: int, threads: int = 1,
                keep_paths: bool = False, heldout_grad: bool = False) -> BatchResult:
    """Run every task in ``batch`` from ``theta0``, accumulating pull-forward gradients."""
    theta0 = np.asarray(theta0, dtype=np.float64)
    for t in batch:
        if t.dim != theta0.size:
            raise ConfigError(f"task dimension {t.dim} does not match initialization {theta0.size}")

    def work(item):
        i, task = item
        return _run_one(task, i, theta0, geometry, step_seed, keep_paths, heldout_grad)

    items = list(enumerate(batch))
    if threads > 1 and len(items) > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            results = list(ex.map(work, items))
    else:
        results = [work(it) for it in items]
    res = BatchResult(results)
    if not res.ok:
        raise DivergenceError("every task in the meta batch diverged")
    return res


def _sum_in_order(vectors, dim):
    acc = np.zeros(dim)
    for v in vectors:
        acc += v
    return acc


def apply_meta_update(state: MetaState, grad: np.ndarray, cfg: MetaConfig) -> MetaState:
    """One meta-optimizer step on the batch-averaged meta-gradient ``grad``."""
    step = state.step + 1
    if cfg.optimizer == "sgd":
        return MetaState(theta0=state.theta0 - cfg.beta * grad, step=step)
    a = cfg.adam
    m = np.zeros_like(grad) if state.m is None else state.m
    v = np.zeros_like(grad) if state.v is None else state.v
    m = a.beta1 * m + (1 - a.beta1) * grad
    v = a.beta2 * v + (1 - a.beta2) * grad * grad
    mhat = m / (1 - a.beta1 ** step)
    vhat = v / (1 - a.beta2 ** step)
    theta = state.theta0 - a.lr * mhat / (np.sqrt(vhat) + a.eps)
    return MetaState(theta0=theta, step=step, m=m, v=v)


# ------------------------------------------------------------------ meta steps


def leap_meta_step(state: MetaState, batch, cfg: MetaConfig, rng) -> MetaState:
    """Pull the initialization forward along every task's freshly recorded path."""
    res = train_batch(state.theta0, batch, cfg.geometry, _draw_seed(rng), cfg.threads,
                      cfg.keep_paths)
    ok = res.ok
    accum = _sum_in_order([t.meta_grad for t in ok], state.theta0.size)
    new = apply_meta_update(state, accum / len(ok), cfg)
    new.accum = accum
    new.last = res
    return new


def reptile_meta_step(state: MetaState, batch, eps: float, rng, geometry=None, threads=1,
                      adam: Optional[AdamConfig] = None) -> MetaState:
    """Move the initialization a fraction ``eps`` toward the mean adapted parameters.

    With ``adam`` set, the negated mean displacement is fed to Adam instead.
    """
    res = train_batch(state.theta0, batch, geometry or GeometryConfig(p=2, include_loss=False,
                                                                      stabilize=False),
                      _draw_seed(rng), threads)
    ok = res.ok
    diff = _sum_in_order([t.final_theta - state.theta0 for t in ok], state.theta0.size) / len(ok)
    if adam is not None:
        new = apply_meta_update(state, -diff, MetaConfig(optimizer="adam", adam=adam))
    else:
        new = MetaState(theta0=state.theta0 + eps * diff, step=state.step + 1)
    new.accum = -diff
    new.last = res
    return new


def fomaml_meta_step(state: MetaState, batch, lr: float, rng, geometry=None, threads=1,
                     adam: Optional[AdamConfig] = None) -> MetaState:
    """First-order MAML: step along the mean gradient at the adapted parameters.

    The gradient is taken on a fresh minibatch drawn after the inner run.
    """
    res = train_batch(state.theta0, batch, geometry or GeometryConfig(), _draw_seed(rng),
                      threads, heldout_grad=True)
    ok = res.ok
    g = _sum_in_order([t.heldout_grad for t in ok], state.theta0.size) / len(ok)
    if adam is not None:
        new = apply_meta_update(state, g, MetaConfig(optimizer="adam", adam=adam))
    else:
        new = MetaState(theta0=state.theta0 - lr * g, step=state.step + 1)
    new.accum = g
    new.last = res
    return new


# ------------------------------------------------------------------ drivers


def _record(state: MetaState, prev_theta, res: BatchResult, cfg: MetaConfig) -> MetaRecord:
    snap = None
    if cfg.snapshot_every and (state.step % cfg.snapshot_every == 0):
        snap = state.theta0.copy()
    return MetaRecord(
        step=state.step - 1,
        mean_distance=res.mean("distance"),
        meta_grad_norm=float(np.linalg.norm(state.accum / max(len(res.ok), 1))),
        mean_loss=res.mean("mean_loss"),
        mean_final_loss=res.mean("final_loss"),
        dropped=len(res.tasks) - len(res.ok),
        theta0=snap,
    )


def _initial_theta(dist, theta0, rng):
    if len(dist) == 0:
        raise ConfigError("task distribution is empty", key="tasks")
    if theta0 is None:
        return dist.tasks[0].init_params(rng)
    return np.array(theta0, dtype=np.float64)


def run_meta(method: str, dist: TaskDistribution, cfg: MetaConfig, rng, theta0=None,
             callback: Optional[Callable[[MetaRecord], None]] = None):
    """Run ``cfg.meta_steps`` steps of ``method`` and return ``(theta0, history)``.

    ``method`` is one of ``leap``, ``reptile``, ``fomaml``.  Reptile's step size
    is ``cfg.beta``; FOMAML's learning rate is ``cfg.beta``.  With ``optimizer="adam"``
    every method feeds its meta-gradient to Adam at ``cfg.adam.lr``.
    """
    state = MetaState(_initial_theta(dist, theta0, rng))
    adam = cfg.adam if cfg.optimizer == "adam" else None
    history = []
    for _ in range(cfg.meta_steps):
        batch = sample_task_batch(dist, cfg.batch_size, rng)
        if method == "leap":
            new = leap_meta_step(state, batch, cfg, rng)
        elif method == "reptile":
            new = reptile_meta_step(state, batch, cfg.beta, rng, cfg.geometry, cfg.threads, adam)
        elif method == "fomaml":
            new = fomaml_meta_step(state, batch, cfg.beta, rng, cfg.geometry, cfg.threads, adam)
        else:
            raise ConfigError(f"unknown meta-learner {method!r}", key="method")
        rec = _record(new, state.theta0, new.last, cfg)
        history.append(rec)
        if callback is not None:
            callback(rec)
        state = new
        if not np.all(np.isfinite(state.theta0)):
            raise DivergenceError("initialization became non-finite", step=rec.step)
        if cfg.early_stop_tol is not None and rec.meta_grad_norm < cfg.early_stop_tol:
            break
    return state.theta0, history


def run_leap(dist: TaskDistribution, cfg: MetaConfig, rng, theta0=None, callback=None):
    return run_meta("leap", dist, cfg, rng, theta0, callback)


def run_reptile(dist, cfg, rng, theta0=None, callback=None):
    return run_meta("reptile", dist, cfg, rng, theta0, callback)


def run_fomaml(dist, cfg, rng, theta0=None, callback=None):
    return run_meta("fomaml", dist, cfg, rng, theta0, callback)


def run_joint(dist: TaskDistribution, cfg: MetaConfig, rng, theta0=None, callback=None):
    """Multi-task training of one shared parameter vector.

    Each round samples a task batch and takes ``K`` round-robin passes over it,
    one SGD step per task per pass, using each task's own update rule.  This
    matches Leap's gradient-evaluation budget.
    """
    theta = _initial_theta(dist, theta0, rng)
    history = []
    for s in range(cfg.meta_steps):
        batch = sample_task_batch(dist, cfg.batch_size, rng)
        seed = _draw_seed(rng)
        rngs = [task_rng(seed, i, t) for i, t in enumerate(batch)]
        K = max(t.step_budget for t in batch)
        losses = []
        for i in range(K):
            for t, r in zip(batch, rngs):
                if i >= t.step_budget:
                    continue
                loss, g = t.loss_and_grad(theta, t.sample_batch(r))
                losses.append(loss)
                theta = theta - t.update_rule.step_size(i) * t.update_rule.precondition(g)
        if not np.all(np.isfinite(theta)):
            raise DivergenceError("joint training diverged", step=s)
        rec = MetaRecord(step=s, mean_distance=float("nan"), meta_grad_norm=float("nan"),
                         mean_loss=float(np.mean(losses)), mean_final_loss=float(losses[-1]),
                         dropped=0)
        history.append(rec)
        if callback is not None:
            callback(rec)
    return theta, history


def pretrain(method: str, dist, cfg: MetaConfig, rng, theta0=None, callback=None):
    """Dispatch to a pretraining method; ``no_pretraining`` returns the random init."""
    if method == "no_pretraining":
        return _initial_theta(dist, theta0, rng), []
    if method == "joint":
        return run_joint(dist, cfg, rng, theta0, callback)
    return run_meta(method, dist, cfg, rng, theta0, callback)


# ------------------------------------------------------------------ evaluation


def evaluate_transfer(theta0, heldout, eval_steps: int, rng, method: str = "", seed: int = 0,
                      threads: int = 1) -> List[RunRecord]:
    """Train on each held-out task from ``theta0`` and record convergence metrics.

    AUC is taken over the per-step training error; classification errors are
    scaled to 0-100, regression losses are reported raw.  Divergence marks the
    record instead of raising.
    """
    if eval_steps < 1:
        raise ConfigError("eval_steps must be >= 1", key="eval_steps")
    theta0 = np.asarray(theta0, dtype=np.float64)
    step_seed = _draw_seed(rng)

    def work(item):
        i, task = item
        t0 = time.perf_counter()
        losses, errors = [], []
        diverged = False
        try:
            for pt in iter_inner_training(task, theta0, task_rng(step_seed, i, task),
                                          steps=eval_steps):
                losses.append(pt.loss)
                errors.append(pt.error)
        except DivergenceError as exc:
            log.warning("held-out task %d diverged: %s", i, exc)
            diverged = True
        scale = 100.0 if task.is_classification else 1.0
        if diverged:
            final_loss = final_err = area = float("nan")
        else:
            final_loss, final_err, area = losses[-1], errors[-1], auc(errors, scale)
        return RunRecord(method=method, seed=seed, task=f"task{i}", step=len(losses) - 1,
                         loss=final_loss, error=final_err, auc=area,
                         wall_ms=(time.perf_counter() - t0) * 1e3,
                         losses=np.array(losses), errors=np.array(errors), diverged=diverged)

    items = list(enumerate(heldout))
    if threads > 1 and len(items) > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            return list(ex.map(work, items))
    return [work(it) for it in items]
