"""Chordal distances along gradient paths and the pull-forward meta-gradient.

A path point is the pair ``(theta, f(theta))``, viewed as a point in
``R^{n+1}`` (or ``R^n`` when the loss coordinate is dropped).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError


@dataclass(frozen=True)
class ManifoldPoint:
    theta: np.ndarray
    loss: float

    def __post_init__(self):
        theta = np.asarray(self.theta, dtype=np.float64)
        if not (np.all(np.isfinite(theta)) and math.isfinite(self.loss)):
            raise ValueError("manifold points must have finite entries")
        object.__setattr__(self, "theta", theta)


@dataclass(frozen=True)
class GeometryConfig:
    """``p=1`` measures path length, ``p=2`` path energy."""

    p: int = 1
    include_loss: bool = True
    stabilize: bool = True
    zero_norm_eps: float = 1e-12

    def __post_init__(self):
        if self.p not in (1, 2):
            raise ConfigError(f"p must be 1 or 2, got {self.p}", key="p")
        if not self.zero_norm_eps > 0:
            raise ConfigError("zero_norm_eps must be positive", key="zero_norm_eps")

    @property
    def label(self) -> str:
        return f"p={self.p},mu={int(self.stabilize)},f={int(self.include_loss)}"


def segment_norm(a: ManifoldPoint, b: ManifoldPoint, include_loss: bool = True) -> float:
    dtheta = b.theta - a.theta
    if a.theta.shape != b.theta.shape:
        raise ValueError("dimension mismatch")
    sq = float(dtheta @ dtheta)
    if include_loss:
        sq += (b.loss - a.loss) ** 2
    return math.sqrt(sq)


def segment_norms(params, losses, include_loss: bool = True) -> np.ndarray:
    """Norms of all consecutive segments of a path given as arrays."""
    dtheta = np.diff(np.asarray(params, dtype=np.float64), axis=0)
    sq = np.einsum("ij,ij->i", dtheta, dtheta)
    if include_loss:
        sq = sq + np.diff(np.asarray(losses, dtype=np.float64)) ** 2
    return np.sqrt(sq)


def path_distance(path, cfg: GeometryConfig) -> float:
    """Cumulative chordal distance: sum of segment norms raised to ``p``."""
    dtheta = np.diff(np.asarray(path.params, dtype=np.float64), axis=0)
    sq = np.einsum("ij,ij->i", dtheta, dtheta)
    if cfg.include_loss:
        sq = sq + np.diff(np.asarray(path.losses, dtype=np.float64)) ** 2
    return float(np.sum(sq if cfg.p == 2 else np.sqrt(sq)))


def stabilizer_value(f_theta: float, f_psi: float) -> float:
    """Penalty that is zero on descent and ``-2 (f_psi - f_theta)^2`` on ascent."""
    if f_psi <= f_theta:
        return 0.0
    return -2.0 * (f_psi - f_theta) ** 2


def pull_forward_increment(theta_i, f_i, g_i, psi_next, f_next, cfg: GeometryConfig) -> np.ndarray:
    """Gradient w.r.t. the current point of ``||frozen_next - current||^p``.

    With the inner-loop Jacobian taken as the identity this is also the
    contribution of segment ``i`` to the meta-gradient at the initialization.
    """
    theta_i = np.asarray(theta_i, dtype=np.float64)
    dtheta = np.asarray(psi_next, dtype=np.float64) - theta_i
    sq = float(dtheta @ dtheta)
    direction = dtheta
    if cfg.include_loss:
        df = float(f_next) - float(f_i)
        if cfg.stabilize:
            df = -abs(df)
        sq += df * df
        direction = dtheta + df * np.asarray(g_i, dtype=np.float64)
    if cfg.p == 2:
        return -2.0 * direction
    norm = math.sqrt(sq)
    if norm < cfg.zero_norm_eps:
        return np.zeros_like(theta_i)
    return -direction / norm


def path_meta_gradient(path, cfg: GeometryConfig) -> np.ndarray:
    """Sum of pull-forward increments over every segment of a recorded path."""
    acc = np.zeros(path.params.shape[1])
    for i in range(path.num_steps):
        acc += pull_forward_increment(path.params[i], path.losses[i], path.grads[i],
                                      path.params[i + 1], path.losses[i + 1], cfg)
    return acc


class PullForwardAccumulator:
    """Streaming version of :func:`path_meta_gradient`; keeps only the previous point."""

    def __init__(self, dim: int, cfg: GeometryConfig):
        self.cfg = cfg
        self.grad = np.zeros(dim)
        self.distance = 0.0
        self.loss_sum = 0.0
        self.count = 0
        self._prev = None

    def push(self, theta, loss, grad=None):
        if self._prev is not None:
            pt, pf, pg = self._prev
            self.grad += pull_forward_increment(pt, pf, pg, theta, loss, self.cfg)
            dtheta = theta - pt
            sq = float(dtheta @ dtheta)
            if self.cfg.include_loss:
                sq += (loss - pf) ** 2
            self.distance += sq if self.cfg.p == 2 else math.sqrt(sq)
        self.loss_sum += loss
        self.count += 1
        self._prev = (theta, loss, grad)
