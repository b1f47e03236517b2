"""Acceptance criteria, one test each, at the stated tolerances and time limits.

Each test prints a single ``[PASS]``/``[FAIL]`` line (visible under ``pytest -v``)
before asserting.  Run ``pytest tests/test_acceptance.py -v`` to see them.
"""

import time

import numpy as np
import pytest

from leap.cli import main
from leap.experiments import StabilizerSuite, compare_methods, meta_loss_curve, paired_one_sided
from leap.geometry import GeometryConfig
from leap.suites import (JACOBIAN_ALPHAS, increment_checks, jacobian_suite, pareto_gap,
                         reduction_step_error, theorem1_batch, theorem1_suite)
from leap.verify import steps_to_threshold


@pytest.fixture
def report(capsys):
    def emit(criterion, ok, summary):
        with capsys.disabled():
            print(f"\n[{'PASS' if ok else 'FAIL'}] {criterion}: {summary}")
        return ok
    return emit


def test_1_increment_matches_finite_differences(report):
    t = time.perf_counter()
    checks = increment_checks(seed=0, configs=20)
    wall = time.perf_counter() - t
    worst = max(c.max_error for c in checks)
    ok = len(checks) == 4 and worst < 1e-5 and wall < 10
    report("1 increment vs FD", ok,
           f"4 configs x 20 pairs, max rel err {worst:.2e} (< 1e-5), {wall:.1f}s (< 10s)")
    assert ok


def test_2_reptile_reduction(report):
    t = time.perf_counter()
    worst = max(reduction_step_error(seed) for seed in range(10))
    wall = time.perf_counter() - t
    ok = worst <= 1e-12 and wall < 5
    report("2 Reptile reduction", ok, f"10 seeds, max |diff| {worst:.2e} (<= 1e-12), {wall:.1f}s (< 5s)")
    assert ok


def test_3_monotone_descent(report):
    for seed in range(5):
        tasks, _ = theorem1_batch(seed)
        A = tasks[0].params.A
        assert tasks[0].dim <= 10 and all(t.full_batch for t in tasks)
        assert tasks[0].update_rule.alpha <= 1 / np.max(np.linalg.eigvalsh(A)) + 1e-15
    t = time.perf_counter()
    checks = {c.check_name: c for c in theorem1_suite()}
    wall = time.perf_counter() - t
    inc = checks["theorem1_monotone_distance"]
    ok = all(c.passed for c in checks.values()) and wall < 30
    report("3 monotone descent", ok,
           f"5 batches x 200 steps, max increase {inc.max_error:.2e} (<= 1e-9), "
           f"total decrease {checks['theorem1_strict_total_decrease'].status}, "
           f"feasibility {checks['theorem1_feasibility'].status}, {wall:.1f}s (< 30s)")
    assert ok


def test_4_pareto_oracle(report):
    t = time.perf_counter()
    gaps = [pareto_gap(seed)[0] for seed in range(3)]
    wall = time.perf_counter() - t
    ok = max(gaps) <= 2.0 and wall < 120
    report("4 Pareto oracle", ok,
           f"3 instances, max gap {max(gaps):.2f} cells (<= 2), {wall:.1f}s (< 120s)")
    assert ok


def test_5_jacobian_precision(report):
    t = time.perf_counter()
    checks = {c.check_name: c for c in jacobian_suite()}
    wall = time.perf_counter() - t
    ok = all(c.passed for c in checks.values()) and wall < 30
    rho = checks["rho_monotone_in_alpha"].details["rho"][0]
    report("5 Jacobian precision", ok,
           f"closed form err {checks['jacobian_closed_form'].max_error:.1e} (<= 1e-10), "
           f"rho(K=20) seed 0 " + ", ".join(f"a={a}: {rho[str(a)][-1]:.3f}" for a in JACOBIAN_ALPHAS)
           + f", max rho a=0.01 {checks['rho_small_alpha_below_0.25'].max_error:.3f} (< 0.25), "
           f"min rho a=0.5 {checks['rho_large_alpha_above_0.25'].max_error:.3f} (> 0.25), "
           f"{wall:.1f}s (< 30s)")
    assert ok


def test_6_transfer_benefit(report):
    t = time.perf_counter()
    res = compare_methods(range(10), ["leap", "reptile", "no_pretraining"])
    wall = time.perf_counter() - t
    auc = {m: np.array([r.mean_auc for r in rs]) for m, rs in res.items()}
    p = paired_one_sided(auc["leap"], auc["no_pretraining"])
    ok = (auc["leap"].mean() < auc["no_pretraining"].mean() and p < 0.05
          and auc["leap"].mean() <= auc["reptile"].mean() and wall < 600)
    report("6 transfer", ok,
           f"mean AUC leap {auc['leap'].mean():.4f}, reptile {auc['reptile'].mean():.4f}, "
           f"random {auc['no_pretraining'].mean():.4f}; paired p={p:.1e} (< 0.05), "
           f"{wall:.0f}s (< 600s)")
    assert ok


def test_7_stabilizer_speeds_up(report):
    st = StabilizerSuite()
    stab = GeometryConfig(p=1, include_loss=True, stabilize=True)
    plain = GeometryConfig(p=2, include_loss=False, stabilize=False)
    t = time.perf_counter()
    wins, counts = 0, []
    for seed in range(10):
        a = steps_to_threshold(meta_loss_curve(seed, stab, st), st.threshold)
        b = steps_to_threshold(meta_loss_curve(seed, plain, st), st.threshold)
        counts.append((a, b))
        wins += a < b
    wall = time.perf_counter() - t
    ok = wins >= 8 and wall < 600
    report("7 stabilizer", ok,
           f"stabilized p=1 faster to loss {st.threshold} in {wins}/10 seeds (>= 8), "
           f"steps {counts}, {wall:.0f}s (< 600s)")
    assert ok


DETERMINISM_CONFIG = """\
experiment:
  seeds: [3, 4]
  methods: [leap, reptile, fomaml, joint, no_pretraining]
tasks:
  family: sinusoid_mlp
  count: 8
  hidden: 8
  steps: 8
  alpha: 0.02
  batch_size: 5
meta:
  steps: 6
  beta: 0.01
  batch_size: 4
  snapshot_every: 3
heldout:
  count: 3
  eval_steps: 5
"""


def test_8_train_is_byte_identical(report, tmp_path):
    cfg = tmp_path / "det.yaml"
    cfg.write_text(DETERMINISM_CONFIG)
    outs = []
    for name, threads in (("a", 1), ("b", 1), ("c", 4)):
        out = tmp_path / name
        assert main(["train", "--config", str(cfg), "--out", str(out), "--threads", str(threads)]) == 0
        assert main(["evaluate", "--config", str(cfg), "--out", str(out), "--threads", str(threads)]) == 0
        outs.append({p.relative_to(out).as_posix(): p.read_bytes()
                     for p in sorted(out.rglob("*")) if p.suffix in (".csv", ".bin")})
    n_csv = sum(k.endswith(".csv") for k in outs[0])
    ok = outs[0] == outs[1] == outs[2] and n_csv == 5 * 2 + 2
    report("8 determinism", ok,
           f"{n_csv} CSVs + checkpoints identical across 2 runs and --threads 1/4: {ok}")
    assert ok
