"""Run records and convergence metrics."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

EVAL_COLUMNS = ("method", "seed", "task", "step", "loss", "error", "auc")


def auc(errors, scale: float = 1.0) -> float:
    """Trapezoidal area under a per-step error curve divided by ``len - 1``.

    Pass ``scale=100`` for error rates in [0, 1] to report on a 0-100 scale.
    """
    e = np.asarray(errors, dtype=np.float64)
    if e.size == 0:
        raise ValueError("empty error curve")
    if e.size == 1:
        return float(e[0]) * scale
    area = 0.5 * float(np.sum(e[1:] + e[:-1]))
    return area / (e.size - 1) * scale


@dataclass
class RunRecord:
    method: str
    seed: int
    task: str
    step: int
    loss: float
    error: float
    auc: float
    wall_ms: float = 0.0
    losses: Optional[np.ndarray] = field(default=None, repr=False)
    errors: Optional[np.ndarray] = field(default=None, repr=False)
    diverged: bool = False

    def row(self):
        return [self.method, self.seed, self.task, self.step,
                _fmt(self.loss), _fmt(self.error), _fmt(self.auc)]


def _fmt(x) -> str:
    return repr(float(x))


def summarize(records, field_name: str = "auc"):
    """Mean and sample standard deviation of one field, skipping diverged runs."""
    vals = np.array([getattr(r, field_name) for r in records if not r.diverged])
    if vals.size == 0:
        return float("nan"), float("nan")
    std = float(np.std(vals, ddof=1)) if vals.size > 1 else 0.0
    return float(np.mean(vals)), std
