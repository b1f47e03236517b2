"""Named verification suites run by ``leap verify``.

Every suite returns a list of :class:`~leap.verify.Check` records.
"""

from __future__ import annotations

from dataclasses import replace

import numpy as np

from .errors import ConfigError
from .geometry import GeometryConfig, pull_forward_increment
from .meta import MetaConfig, MetaState, leap_meta_step, reptile_meta_step
from .tasks import QuadraticSpec, Task, TaskDistribution, classify_tasks, random_spd, sinusoid_tasks
from .training import UpdateRule
from .verify import (fd_gradient, fd_segment_gradient, jacobian_chain, jacobian_precision,
                     make_check, make_grid, pareto_oracle, pull_forward_descent, relative_error, run_ablation,
                     reptile_reduction_error, shared_curvature_batch)

FD_STEP = 1e-6
FD_TOL = 1e-5


def _random_quadratic(rng, n, alpha=0.1):
    spec = QuadraticSpec(random_spd(n, rng, (0.1, 2.0)), rng.standard_normal(n))
    return Task("quadratic", spec, data_seed=int(rng.integers(1 << 31)),
                update_rule=UpdateRule(alpha), step_budget=10, full_batch=True)


def _family_sample(family, rng):
    if family == "quadratic":
        return _random_quadratic(rng, int(rng.integers(1, 51)))
    if family == "sinusoid_mlp":
        return sinusoid_tasks(1, rng, hidden=int(rng.integers(2, 8)), seed_offset=int(rng.integers(1 << 31)))[0]
    return classify_tasks(1, rng, hidden=int(rng.integers(2, 6)), seed_offset=int(rng.integers(1 << 31)))[0]


def gradient_checks(seed: int = 0, points: int = 10):
    """Analytic task gradients against central differences, every family."""
    checks = []
    for family in ("quadratic", "sinusoid_mlp", "synth_classify"):
        rng = np.random.default_rng([seed, len(family)])
        worst = 0.0
        for _ in range(points):
            task = _family_sample(family, rng)
            theta = task.init_params(rng) + 0.3 * rng.standard_normal(task.dim)
            batch = task.sample_batch(rng)
            _, g = task.loss_and_grad(theta, batch)
            fd = fd_gradient(lambda th: task.loss(th, batch), theta, FD_STEP)
            worst = max(worst, relative_error(g, fd))
        checks.append(make_check(f"loss_grad_fd[{family}]", worst, FD_TOL, [seed]))
    return checks


def increment_checks(seed: int = 0, configs: int = 20):
    """Pull-forward increments against the finite-difference segment gradient."""
    checks = []
    for p in (1, 2):
        for include_loss in (True, False):
            cfg = GeometryConfig(p=p, include_loss=include_loss, stabilize=False)
            rng = np.random.default_rng([seed, p, int(include_loss)])
            worst = 0.0
            for k in range(configs):
                family = "quadratic" if k % 2 == 0 else "sinusoid_mlp"
                task = _family_sample(family, rng)
                batch = task.sample_batch(rng)
                theta = task.init_params(rng)
                f_i, g_i = task.loss_and_grad(theta, batch)
                psi = theta - 0.1 * g_i + 0.05 * rng.standard_normal(task.dim)
                f_next = task.loss(psi, batch) + 0.1 * rng.standard_normal()
                inc = pull_forward_increment(theta, f_i, g_i, psi, f_next, cfg)
                fd = fd_segment_gradient(task, batch, theta, psi, f_next, cfg, FD_STEP)
                worst = max(worst, relative_error(inc, fd))
            checks.append(make_check(f"increment_fd[{cfg.label}]", worst, FD_TOL, [seed]))
    return checks


def gradients_suite(seed: int = 0):
    return gradient_checks(seed) + increment_checks(seed)


# ------------------------------------------------------------------ descent


THEOREM_BATCHES = 5
THEOREM_STEPS = 200
THEOREM_GEOMETRY = GeometryConfig(p=1, include_loss=True, stabilize=True)


def theorem1_batch(seed: int):
    rng = np.random.default_rng([seed, 31])
    n = int(rng.integers(2, 11))
    tasks = shared_curvature_batch(4, n, rng, steps=100)
    theta0 = 3.0 * rng.standard_normal(n)
    return tasks, theta0


def theorem1_suite(seeds=range(THEOREM_BATCHES), meta_steps: int = THEOREM_STEPS):
    """Leap on deterministic convex batches: monotone path distance and feasibility."""
    cfg = MetaConfig(geometry=THEOREM_GEOMETRY, beta=1e-2, batch_size=4, meta_steps=meta_steps)
    checks = []
    worst_inc, worst_gap, all_dec, all_feasible = -np.inf, -np.inf, True, True
    for seed in seeds:
        tasks, theta0 = theorem1_batch(seed)
        rep = pull_forward_descent(tasks, theta0, cfg)
        worst_inc = max(worst_inc, rep.max_increase)
        worst_gap = max(worst_gap, rep.worst_feasibility_gap)
        all_dec &= rep.total_decrease > 0
        all_feasible &= rep.feasible
    seeds = list(seeds)
    checks.append(make_check("theorem1_monotone_distance", max(worst_inc, 0.0), 1e-9, seeds))
    checks.append(make_check("theorem1_strict_total_decrease", 0.0, 0.0, seeds, ok=all_dec))
    checks.append(make_check("theorem1_feasibility", max(worst_gap, 0.0), 1e-9, seeds,
                             ok=all_feasible))
    return checks


# ------------------------------------------------------------------ pareto


PARETO_GEOMETRY = GeometryConfig(p=2, include_loss=True, stabilize=True)
PARETO_RESOLUTION = 0.01


def pareto_instance(seed: int, k: int = 3, steps: int = 40):
    """Three 2-d quadratics sharing a Hessian, minima in [-0.5, 0.5]^2, alpha = 0.5 / lambda_max."""
    rng = np.random.default_rng([seed, 37])
    A = random_spd(2, rng, (0.3, 1.0))
    alpha = 0.5 / float(np.max(np.linalg.eigvalsh(A)))
    return [Task("quadratic", QuadraticSpec(A, rng.uniform(-0.5, 0.5, size=2)), data_seed=j,
                 update_rule=UpdateRule(alpha), step_budget=steps, full_batch=True)
            for j in range(k)]


def pareto_gap(seed: int, meta_steps: int = 1500, beta: float = 1e-2):
    """Distance in grid cells between Leap's final initialization and the grid minimizer."""
    tasks = pareto_instance(seed)
    cfg = MetaConfig(geometry=PARETO_GEOMETRY, beta=beta, batch_size=len(tasks),
                     meta_steps=meta_steps)
    state = MetaState(np.zeros(2))
    rng = np.random.default_rng(seed)
    for _ in range(meta_steps):
        state = leap_meta_step(state, tasks, cfg, rng)
    best = pareto_oracle(tasks, make_grid(-1.0, 1.0, PARETO_RESOLUTION, 2), PARETO_GEOMETRY)
    return float(np.max(np.abs(state.theta0 - best))) / PARETO_RESOLUTION, state.theta0, best


def pareto_suite(seeds=(0,), meta_steps: int = 1500):
    seeds = list(seeds)
    gaps = {s: pareto_gap(s, meta_steps) for s in seeds}
    worst = max(g[0] for g in gaps.values())
    return [make_check("pareto_grid_cells", worst, 2.0, seeds,
                       details={str(s): {"leap": g[1].tolist(), "oracle": g[2].tolist()}
                                for s, g in gaps.items()})]


# ------------------------------------------------------------------ jacobian


JACOBIAN_ALPHAS = (0.01, 0.1, 0.5)
JACOBIAN_STEPS = (5, 10, 15, 20)


def unit_radius_quadratic(seed: int, n: int = 5):
    """Random SPD Hessian with eigenvalues in [0.5, 1] and largest exactly 1."""
    rng = np.random.default_rng([seed, 41])
    q, _ = np.linalg.qr(rng.standard_normal((n, n)))
    lam = rng.uniform(0.5, 1.0, size=n)
    lam[0] = 1.0
    A = (q * lam) @ q.T
    return Task("quadratic", QuadraticSpec(0.5 * (A + A.T), rng.standard_normal(n)), seed,
                UpdateRule(0.1), 20, full_batch=True)


def rho_table(task, theta0, alphas=JACOBIAN_ALPHAS, steps=JACOBIAN_STEPS):
    """``{alpha: [rho after each K in steps]}``."""
    out = {}
    for a in alphas:
        t = replace(task, update_rule=UpdateRule(a))
        chain = jacobian_chain(t, theta0, max(steps), record_every=1)
        out[a] = [jacobian_precision(J) for k, J in chain.history if k in steps]
    return out


def jacobian_suite(seeds=range(5)):
    seeds = list(seeds)
    closed = 0.0
    for seed in seeds:
        rng = np.random.default_rng([seed, 43])
        for n in (2, 5, 10):
            task = _random_quadratic(rng, n)
            for a in JACOBIAN_ALPHAS:
                for K in (1, 5, 20):
                    t = replace(task, update_rule=UpdateRule(a))
                    J = jacobian_chain(t, np.zeros(n), K).J
                    ref = np.linalg.matrix_power(np.eye(n) - a * task.params.A, K)
                    closed = max(closed, float(np.max(np.abs(J - ref))))
    checks = [make_check("jacobian_closed_form", closed, 1e-10, seeds)]

    monotone_violation = 0.0
    small_max, large_min = 0.0, np.inf
    tables = {}
    for seed in seeds:
        task = unit_radius_quadratic(seed)
        tab = rho_table(task, np.zeros(task.dim))
        tables[seed] = {str(a): v for a, v in tab.items()}
        for k in range(len(JACOBIAN_STEPS)):
            col = [tab[a][k] for a in JACOBIAN_ALPHAS]
            monotone_violation = max(monotone_violation, float(np.max(-np.diff(col))))
        small_max = max(small_max, max(tab[0.01]))
        large_min = min(large_min, min(tab[0.5]))
    checks.append(make_check("rho_monotone_in_alpha", monotone_violation, 0.0, seeds,
                             details={"rho": tables}))
    checks.append(make_check("rho_small_alpha_below_0.25", small_max, 0.25, seeds,
                             ok=small_max < 0.25))
    checks.append(make_check("rho_large_alpha_above_0.25", large_min, 0.25, seeds,
                             ok=large_min > 0.25))
    return checks


# ------------------------------------------------------------------ reptile


def reduction_step_error(seed: int, beta: float = 0.05) -> float:
    """One Leap step in the parameter-space energy configuration vs one Reptile step."""
    rng = np.random.default_rng([seed, 53])
    if seed % 2 == 0:
        n = int(rng.integers(1, 20))
        tasks = [_random_quadratic(rng, n, alpha=0.05) for _ in range(3)]
    else:
        tasks = sinusoid_tasks(3, rng, hidden=10, steps=10, alpha=0.02)
    theta0 = tasks[0].init_params(rng)
    geo = GeometryConfig(p=2, include_loss=False, stabilize=False)
    cfg = MetaConfig(geometry=geo, beta=beta, batch_size=len(tasks), meta_steps=1)
    a = leap_meta_step(MetaState(theta0), tasks, cfg, np.random.default_rng(seed))
    b = reptile_meta_step(MetaState(theta0), tasks, 2 * beta, np.random.default_rng(seed))
    return float(np.max(np.abs(a.theta0 - b.theta0)))


def reptile_reduction_suite(seeds=range(10)):
    seeds = list(seeds)
    worst = max(reduction_step_error(s) for s in seeds)
    checks = [make_check("reptile_reduction_step", worst, 1e-12, seeds)]
    rng = np.random.default_rng(99)
    dist = TaskDistribution(sinusoid_tasks(6, rng, hidden=10, steps=10, alpha=0.02))
    cfg = MetaConfig(beta=0.05, batch_size=3, meta_steps=5)
    run_err = max(reptile_reduction_error(dist, cfg, s) for s in seeds[:3])
    checks.append(make_check("reptile_reduction_run", run_err, 1e-12, seeds[:3]))
    return checks


# ------------------------------------------------------------------ ablation


def ablation_suite(seeds=(0, 1, 2), meta_steps: int = 20):
    """Small eight-cell ablation on noisy sinusoids plus the Reptile-cell identity."""
    rng = np.random.default_rng(61)
    dist = TaskDistribution(sinusoid_tasks(10, rng, hidden=10, steps=10, alpha=0.02,
                                           noise_std=0.3, batch_size=5))
    base = MetaConfig(beta=0.003, batch_size=3, meta_steps=meta_steps)
    cells = run_ablation(dist, base, list(seeds))
    histories = {c.label: [float(v) for v in c.result] for c in cells}
    labels = {c.label for c in cells}
    checks = [make_check("ablation_cells", 8 - len(labels), 0, list(seeds),
                         details={"histories": histories,
                                  "auc": {c.label: c.auc for c in cells}})]
    # the (p=2, mu=0, f=0) cell must coincide with Reptile at eps = 2 beta
    from .meta import run_reptile

    cell = next(c for c in cells if c.p == 2 and not c.stabilize and not c.include_loss)
    err = 0.0
    rep_cfg = replace(base, beta=2 * base.beta)
    for k, seed in enumerate(seeds):
        theta0 = dist.tasks[0].init_params(np.random.default_rng([0, seed]))
        theta, _ = run_reptile(dist, rep_cfg, np.random.default_rng(seed), theta0)
        err = max(err, float(np.max(np.abs(theta - cell.final_theta[k]))))
    checks.append(make_check("ablation_reptile_cell", err, 1e-12, list(seeds)))
    return checks


SUITES = {
    "gradients": gradients_suite,
    "theorem1": theorem1_suite,
    "jacobian": jacobian_suite,
    "pareto": pareto_suite,
    "ablation": ablation_suite,
    "reptile_reduction": reptile_reduction_suite,
}


def run_suite(name: str):
    if name not in SUITES:
        raise ConfigError(f"unknown verification suite {name!r} (known: {', '.join(SUITES)})",
                          key="suite")
    return SUITES[name]()
