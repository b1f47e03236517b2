"""Desk-scale transfer experiments on sinusoid regression.

A seed fixes the pretraining tasks, the held-out tasks, the random
initialization shared by every method and the minibatch streams, so
methods can be compared pairwise per seed.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Dict, List, Sequence

import numpy as np

from .geometry import GeometryConfig
from .meta import AdamConfig, MetaConfig, evaluate_transfer, pretrain
from .tasks import TaskDistribution, sinusoid_tasks


@dataclass(frozen=True)
class SinusoidSuite:
    n_pretrain: int = 20
    n_heldout: int = 10
    hidden: int = 20
    alpha: float = 0.02
    inner_steps: int = 50
    eval_steps: int = 50
    batch_size: int = 10
    noise_std: float = 0.0
    meta_steps: int = 200
    meta_batch: int = 5

    def tasks(self, seed: int):
        rng = np.random.default_rng([seed, 11])
        kw = dict(alpha=self.alpha, steps=self.inner_steps, hidden=self.hidden,
                  batch_size=self.batch_size, noise_std=self.noise_std)
        pre = sinusoid_tasks(self.n_pretrain, rng, **kw)
        held = sinusoid_tasks(self.n_heldout, rng, seed_offset=1000, **kw)
        return TaskDistribution(pre), held

    def init(self, seed: int, dist: TaskDistribution):
        return dist.tasks[0].init_params(np.random.default_rng([seed, 13]))


# meta step sizes fixed by scripts/tune_transfer.py on seeds disjoint from 0-9
# (results/tuning_*.log); with Adam the step is the learning rate
TUNED_STEP = {"leap": 0.1, "reptile": 0.1, "fomaml": 0.01}
TUNED_OPTIMIZER = {"leap": "adam", "reptile": "adam", "fomaml": "adam"}

LEAP_GEOMETRY = GeometryConfig(p=1, include_loss=True, stabilize=True)
REPTILE_GEOMETRY = GeometryConfig(p=2, include_loss=False, stabilize=False)


@dataclass
class TrialResult:
    seed: int
    method: str
    mean_auc: float
    mean_final_loss: float
    history: list = field(default_factory=list, repr=False)


def transfer_trial(seed: int, method: str, suite: SinusoidSuite = SinusoidSuite(),
                   step: float = None, geometry: GeometryConfig = None,
                   optimizer: str = None) -> TrialResult:
    """Pretrain with ``method`` and report mean held-out AUC of the raw training loss.

    With ``optimizer="adam"`` the step size is Adam's learning rate.
    """
    dist, held = suite.tasks(seed)
    theta0 = suite.init(seed, dist)
    if geometry is None:
        geometry = REPTILE_GEOMETRY if method == "reptile" else LEAP_GEOMETRY
    beta = TUNED_STEP.get(method, 0.1) if step is None else step
    optimizer = optimizer or TUNED_OPTIMIZER.get(method, "sgd")
    cfg = MetaConfig(geometry=geometry, beta=beta, batch_size=suite.meta_batch,
                     meta_steps=suite.meta_steps, optimizer=optimizer, adam=AdamConfig(lr=beta))
    theta, hist = pretrain(method, dist, cfg, np.random.default_rng([seed, 17]), theta0)
    recs = evaluate_transfer(theta, held, suite.eval_steps, np.random.default_rng([seed, 19]),
                             method=method, seed=seed)
    ok = [r for r in recs if not r.diverged]
    mean_auc = float(np.mean([r.auc for r in ok])) if len(ok) == len(recs) else float("inf")
    return TrialResult(seed, method, mean_auc, float(np.mean([r.loss for r in ok])), hist)


def compare_methods(seeds: Sequence[int], methods: Sequence[str],
                    suite: SinusoidSuite = SinusoidSuite(), steps: Dict[str, float] = None):
    """``{method: [TrialResult per seed]}``."""
    steps = steps or {}
    return {m: [transfer_trial(s, m, suite, steps.get(m)) for s in seeds] for m in methods}


def paired_one_sided(a, b):
    """p-value of the paired t-test for ``mean(a - b) < 0``."""
    from scipy import stats

    return float(stats.ttest_rel(a, b, alternative="less").pvalue)


@dataclass(frozen=True)
class StabilizerSuite:
    """Noisy-minibatch sinusoid setting for comparing ablation cells."""

    suite: SinusoidSuite = SinusoidSuite(noise_std=0.3, batch_size=5, meta_steps=150)
    beta: float = 0.02
    threshold: float = 1.0


def meta_loss_curve(seed: int, geometry: GeometryConfig, st: StabilizerSuite = StabilizerSuite()):
    """Batch-mean inner training loss for each meta step of Leap under ``geometry``."""
    dist, _ = st.suite.tasks(seed)
    theta0 = st.suite.init(seed, dist)
    cfg = MetaConfig(geometry=geometry, beta=st.beta, batch_size=st.suite.meta_batch,
                     meta_steps=st.suite.meta_steps)
    _, hist = pretrain("leap", dist, cfg, np.random.default_rng([seed, 23]), theta0)
    return np.array([h.mean_loss for h in hist])
