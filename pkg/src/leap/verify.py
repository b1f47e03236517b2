"""Independent oracles: finite differences, Jacobian chains, grid search, ablations."""

from __future__ import annotations

import itertools
import math
from dataclasses import asdict, dataclass, field, replace
from typing import List, Optional, Sequence

import numpy as np

import logging

from .errors import ConfigError, DivergenceError, NumericalError, UnsupportedError
from .geometry import GeometryConfig
from .meta import MetaConfig, run_leap, run_reptile
from .tasks import QuadraticSpec, Task, TaskDistribution, random_spd
from .training import UpdateRule, iter_inner_training, run_inner_training

log = logging.getLogger(__name__)

MAX_DENSE_DIM = 64
MAX_FD_HESSIAN_DIM = 50


@dataclass
class Check:
    """One line of a verification report."""

    check_name: str
    status: str
    max_error: float
    tolerance: float
    seeds: list = field(default_factory=list)
    details: Optional[dict] = None

    @property
    def passed(self) -> bool:
        return self.status == "pass"

    def to_dict(self):
        d = asdict(self)
        if d["details"] is None:
            del d["details"]
        return d


def make_check(name, max_error, tolerance, seeds=(), ok=None, details=None) -> Check:
    if ok is None:
        ok = bool(max_error <= tolerance)
    return Check(name, "pass" if ok else "fail", float(max_error), float(tolerance),
                 list(seeds), details)


def relative_error(a, b, floor: float = 1e-8) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(a), np.linalg.norm(b), floor))


# ------------------------------------------------------------ finite differences


def fd_gradient(fn, x, h: float = 1e-6) -> np.ndarray:
    """Central-difference gradient of a scalar function."""
    x = np.asarray(x, dtype=np.float64)
    g = np.empty_like(x)
    for j in range(x.size):
        e = np.zeros_like(x)
        e[j] = h
        g[j] = (fn(x + e) - fn(x - e)) / (2 * h)
    return g


def segment_term(task, batch, psi_next, f_next, cfg: GeometryConfig):
    """``theta -> ||(psi_next, f_next) - (theta, f(theta))||^p`` with the forward point frozen."""
    psi_next = np.asarray(psi_next, dtype=np.float64)

    def term(theta):
        d = psi_next - theta
        sq = float(d @ d)
        if cfg.include_loss:
            sq += (f_next - task.loss(theta, batch)) ** 2
        return sq if cfg.p == 2 else math.sqrt(sq)

    return term


def fd_segment_gradient(task, batch, theta_i, psi_next, f_next, cfg: GeometryConfig,
                        h: float = 1e-6) -> np.ndarray:
    """Finite-difference gradient of the frozen-forward-point segment term at ``theta_i``.

    The stabilizer is not part of this objective; it only alters ascent steps.
    """
    if not 1e-8 <= h <= 1e-4:
        raise ConfigError(f"step h={h} outside [1e-8, 1e-4]", key="h")
    return fd_gradient(segment_term(task, batch, psi_next, f_next, cfg), theta_i, h)


def fd_hessian(task, theta, batch, h: float = 1e-5) -> np.ndarray:
    """Central differences of the analytic gradient, symmetrized."""
    n = theta.size
    if n > MAX_FD_HESSIAN_DIM:
        raise UnsupportedError(f"finite-difference Hessian limited to n <= {MAX_FD_HESSIAN_DIM}")
    H = np.empty((n, n))
    for j in range(n):
        e = np.zeros(n)
        e[j] = h
        H[:, j] = (task.loss_and_grad(theta + e, batch)[1]
                   - task.loss_and_grad(theta - e, batch)[1]) / (2 * h)
    return 0.5 * (H + H.T)


# ------------------------------------------------------------ Jacobians


@dataclass
class JacobianChain:
    J: np.ndarray
    step: int
    history: list = field(default_factory=list, repr=False)


def jacobian_chain(task: Task, theta0, K: int, rng=None, record_every: int = 0) -> JacobianChain:
    """Product of ``(I - alpha_j S_j H(theta_j))`` along the first ``K`` inner steps.

    Quadratics use their constant Hessian; MLP tasks use finite-difference
    Hessians on the same minibatch that drives each step.
    """
    theta = np.array(theta0, dtype=np.float64)
    n = theta.size
    if n > MAX_DENSE_DIM:
        raise UnsupportedError(f"dense Jacobians limited to n <= {MAX_DENSE_DIM}")
    rng = rng if rng is not None else np.random.default_rng(0)
    rule = task.update_rule
    S = np.ones(n) if rule.preconditioner is None else np.asarray(rule.preconditioner)
    J = np.eye(n)
    history = []
    for i in range(K):
        batch = task.sample_batch(rng)
        if task.objective_id == "quadratic":
            H = task.params.A
        else:
            H = fd_hessian(task, theta, batch)
        a = rule.step_size(i)
        J = (np.eye(n) - a * S[:, None] * H) @ J
        _, g = task.loss_and_grad(theta, batch)
        theta = theta - a * S * g
        if record_every and (i + 1) % record_every == 0:
            history.append((i + 1, J.copy()))
    if not np.all(np.isfinite(J)):
        raise NumericalError("non-finite Jacobian", step=K)
    return JacobianChain(J=J, step=K, history=history)


def schatten1(M) -> float:
    try:
        return float(np.sum(np.linalg.svd(np.asarray(M, dtype=np.float64), compute_uv=False)))
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"singular value decomposition did not converge: {exc}")


def jacobian_precision(J) -> float:
    """``||I - J||_1 / ||J||_1`` in the Schatten 1-norm (sum of singular values)."""
    J = np.asarray(J, dtype=np.float64)
    if J.ndim != 2 or J.shape[0] != J.shape[1]:
        raise ValueError("J must be square")
    if J.shape[0] > MAX_DENSE_DIM:
        raise UnsupportedError(f"dense Jacobians limited to n <= {MAX_DENSE_DIM}")
    return schatten1(np.eye(J.shape[0]) - J) / schatten1(J)


# ------------------------------------------------------------ grid oracle


def quadratic_path_distances(tasks: Sequence[Task], points: np.ndarray, cfg: GeometryConfig):
    """Total ``d_p`` over ``tasks`` from every row of ``points``, trained in lock-step."""
    total = np.zeros(len(points))
    for t in tasks:
        if t.objective_id != "quadratic":
            raise UnsupportedError("grid oracle supports only quadratic tasks")
        A, c = t.params.A, t.params.c
        rule = t.update_rule
        S = 1.0 if rule.preconditioner is None else np.asarray(rule.preconditioner)
        th = np.array(points, dtype=np.float64)
        r = th - c
        g = r @ A
        f = 0.5 * np.einsum("ij,ij->i", r, g)
        for i in range(t.step_budget):
            th_next = th - rule.step_size(i) * S * g
            r = th_next - c
            g = r @ A
            f_next = 0.5 * np.einsum("ij,ij->i", r, g)
            d = th_next - th
            sq = np.einsum("ij,ij->i", d, d)
            if cfg.include_loss:
                sq = sq + (f_next - f) ** 2
            total += sq if cfg.p == 2 else np.sqrt(sq)
            th, f = th_next, f_next
    return total


def make_grid(lo, hi, resolution: float, dim: int) -> np.ndarray:
    axis = np.round(np.arange(lo, hi + 0.5 * resolution, resolution), 12)
    mesh = np.meshgrid(*([axis] * dim), indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=1)


def pareto_oracle(tasks: Sequence[Task], grid: np.ndarray, cfg: GeometryConfig) -> np.ndarray:
    """Grid point minimizing the summed path distance over ``tasks``."""
    grid = np.asarray(grid, dtype=np.float64)
    if grid.ndim != 2 or grid.shape[1] > 3:
        raise UnsupportedError("grid oracle supports n <= 3")
    total = quadratic_path_distances(tasks, grid, cfg)
    return grid[int(np.argmin(total))]


# ------------------------------------------------------------ feasibility


def _deterministic(task: Task) -> Task:
    return task if task.full_batch else replace(task, full_batch=True)


def final_loss(task: Task, theta0) -> float:
    last = None
    for pt in iter_inner_training(_deterministic(task), theta0, np.random.default_rng(0)):
        last = pt
    return last.loss


def feasibility_check(theta_new, theta_old, tasks, tol: float = 1e-9) -> List[bool]:
    """Per task: does training from ``theta_new`` end no worse than from ``theta_old``?"""
    return [final_loss(t, theta_new) <= final_loss(t, theta_old) + tol for t in tasks]


# ------------------------------------------------------------ descent audit


def shared_curvature_batch(k: int, n: int, rng, steps: int = 100,
                           eig_range=(0.3, 1.0), center_scale=1.0) -> List[Task]:
    """``k`` quadratics with one common Hessian and independent minima.

    The step size is ``1 / lambda_max`` so every inner run converges.
    """
    A = random_spd(n, rng, eig_range)
    alpha = 1.0 / float(np.max(np.linalg.eigvalsh(A)))
    return [Task("quadratic", QuadraticSpec(A, center_scale * rng.standard_normal(n)),
                 data_seed=j, update_rule=UpdateRule(alpha), step_budget=steps, full_batch=True)
            for j in range(k)]


@dataclass
class DescentReport:
    distances: np.ndarray
    max_increase: float
    total_decrease: float
    feasible: bool
    worst_feasibility_gap: float


def pull_forward_descent(tasks, theta0, cfg: MetaConfig, seed: int = 0) -> DescentReport:
    """Run Leap on a fixed deterministic batch and audit distance and feasibility.

    Records the batch-mean distance before every update and once more after
    the last, so ``distances`` has ``meta_steps + 1`` entries.
    """
    from .meta import MetaState, leap_meta_step, train_batch

    rng = np.random.default_rng(seed)
    state = MetaState(theta0)
    dists = []
    finals_prev = None
    worst_gap = -math.inf
    for s in range(cfg.meta_steps + 1):
        if s < cfg.meta_steps:
            state = leap_meta_step(state, tasks, cfg, rng)
            res = state.last  # paths recorded from the pre-update initialization
        else:
            res = train_batch(state.theta0, tasks, cfg.geometry, 0)
        dists.append(res.mean("distance"))
        finals = np.array([t.final_loss for t in res.tasks])
        if finals_prev is not None:
            worst_gap = max(worst_gap, float(np.max(finals - finals_prev)))
        finals_prev = finals
    d = np.array(dists)
    inc = float(np.max(np.diff(d))) if d.size > 1 else 0.0
    return DescentReport(d, inc, float(d[0] - d[-1]), worst_gap <= 1e-9, worst_gap)


# ------------------------------------------------------------ ablation


@dataclass
class AblationCell:
    p: int
    stabilize: bool
    include_loss: bool
    result: np.ndarray
    per_seed: np.ndarray = field(repr=False, default=None)
    final_theta: list = field(repr=False, default_factory=list)

    @property
    def label(self) -> str:
        return f"p={self.p},mu={int(self.stabilize)},f={int(self.include_loss)}"

    @property
    def auc(self) -> float:
        from .metrics import auc
        return auc(self.result)


ABLATION_GRID = list(itertools.product((1, 2), (False, True), (False, True)))


def run_ablation(dist: TaskDistribution, base_cfg: MetaConfig, seeds: Sequence[int],
                 theta0_seed_offset: int = 0) -> List[AblationCell]:
    """Leap under every (p, stabilizer, loss-dimension) combination.

    Each seed fixes the initialization and the task/minibatch stream, shared
    by all eight cells.
    """
    if len(seeds) < 3:
        raise ConfigError("ablation needs at least 3 seeds", key="seeds")
    cells = []
    for p, stab, inc in ABLATION_GRID:
        geo = replace(base_cfg.geometry, p=p, stabilize=stab, include_loss=inc)
        cfg = replace(base_cfg, geometry=geo)
        curves, thetas = [], []
        for seed in seeds:
            theta0 = dist.tasks[0].init_params(np.random.default_rng([theta0_seed_offset, seed]))
            hist = []
            try:
                theta, _ = run_leap(dist, cfg, np.random.default_rng(seed), theta0,
                                    callback=hist.append)
            except DivergenceError as exc:
                log.warning("ablation cell p=%d mu=%d f=%d diverged on seed %d: %s",
                            p, stab, inc, seed, exc)
                theta = np.full_like(theta0, np.nan)
            curve = [h.mean_loss for h in hist]
            curves.append(curve + [math.nan] * (cfg.meta_steps - len(curve)))
            thetas.append(theta)
        arr = np.array(curves)
        cells.append(AblationCell(p, stab, inc, arr.mean(axis=0), arr, thetas))
    return cells


def steps_to_threshold(curve, threshold: float) -> int:
    """First index at which ``curve`` is at or below ``threshold`` (``len(curve)`` if never)."""
    hits = np.nonzero(np.asarray(curve) <= threshold)[0]
    return int(hits[0]) if hits.size else len(curve)


def reptile_reduction_error(dist: TaskDistribution, cfg: MetaConfig, seed: int, theta0=None) -> float:
    """Max deviation between Leap in its Reptile configuration and Reptile with eps = 2 beta."""
    geo = GeometryConfig(p=2, include_loss=False, stabilize=False)
    leap_cfg = replace(cfg, geometry=geo, optimizer="sgd")
    rep_cfg = replace(cfg, geometry=geo, beta=2 * cfg.beta)
    if theta0 is None:
        theta0 = dist.tasks[0].init_params(np.random.default_rng([7, seed]))
    a, ha = run_leap(dist, leap_cfg, np.random.default_rng(seed), theta0)
    b, hb = run_reptile(dist, rep_cfg, np.random.default_rng(seed), theta0)
    return float(np.max(np.abs(a - b)))
