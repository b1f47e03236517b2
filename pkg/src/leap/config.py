"""Experiment configuration files.

Configs are YAML documents with four top-level sections; see
``docs/config.md`` for the full grammar.  Validation errors name the
offending key and the line it appears on.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
import yaml

from .errors import ConfigError
from .geometry import GeometryConfig
from .meta import METHODS, AdamConfig, MetaConfig
from .tasks import FAMILIES, TaskDistribution, classify_tasks, quadratic_tasks, sinusoid_tasks
from .training import UpdateRule

TASK_KEYS = {
    "common": {"family", "count", "seed", "replace", "steps", "alpha", "schedule", "horizon",
               "batch_size", "dataset_size", "full_batch"},
    "quadratic": {"dim", "eig_range", "center_scale"},
    "sinusoid_mlp": {"hidden", "noise_std", "amplitude_range", "phase_range"},
    "synth_classify": {"dim", "hidden", "separation", "std"},
}
SECTION_KEYS = {
    "experiment": {"seeds", "methods", "out", "threads"},
    "meta": {"p", "include_loss", "stabilize", "beta", "batch_size", "steps", "optimizer", "adam",
             "early_stop_tol", "snapshot_every", "reptile_step", "fomaml_lr", "zero_norm_eps"},
    "heldout": {"count", "seed", "eval_steps"} | TASK_KEYS["common"] - {"family", "replace"}
               | TASK_KEYS["quadratic"] | TASK_KEYS["sinusoid_mlp"] | TASK_KEYS["synth_classify"],
    "adam": {"lr", "beta1", "beta2", "eps"},
}


class _Lines:
    """Maps dotted key paths to 1-based source line numbers."""

    def __init__(self, node):
        self.lines: Dict[str, int] = {}
        self._walk(node, "")

    def _walk(self, node, prefix):
        if isinstance(node, yaml.MappingNode):
            for k, v in node.value:
                path = f"{prefix}.{k.value}" if prefix else str(k.value)
                self.lines[path] = k.start_mark.line + 1
                self._walk(v, path)

    def get(self, path) -> Optional[int]:
        while path:
            if path in self.lines:
                return self.lines[path]
            path = path.rpartition(".")[0]
        return None


@dataclass
class ExperimentConfig:
    raw: Dict[str, Any]
    seeds: List[int]
    methods: List[str]
    out: Path
    distribution: TaskDistribution
    heldout: list
    eval_steps: int
    meta: MetaConfig
    method_steps: Dict[str, float] = field(default_factory=dict)
    source: Optional[str] = None

    def meta_for(self, method: str) -> MetaConfig:
        step = self.method_steps.get(method)
        if step is None:
            return self.meta
        if self.meta.optimizer == "adam":
            return replace(self.meta, adam=replace(self.meta.adam, lr=step))
        return replace(self.meta, beta=step)


def _require(section, key, lines, prefix, kind=None, default=None, required=False):
    path = f"{prefix}.{key}"
    if key not in section:
        if required:
            raise ConfigError("missing required key", key=path, line=lines.get(prefix))
        return default
    v = section[key]
    if kind is not None:
        ok = isinstance(v, kind) and not (kind in (int, float, (int, float)) and isinstance(v, bool))
        if not ok:
            raise ConfigError(f"expected {getattr(kind, '__name__', kind)}, got {v!r}",
                              key=path, line=lines.get(path))
    return v


def _check_keys(section, allowed, prefix, lines):
    if not isinstance(section, dict):
        raise ConfigError("expected a mapping", key=prefix, line=lines.get(prefix))
    for k in section:
        if k not in allowed:
            path = f"{prefix}.{k}" if prefix else str(k)
            raise ConfigError("unknown key", key=path, line=lines.get(path))


def _build_tasks(spec, prefix, lines, default_seed, seed_offset=0):
    family = spec.get("family")
    if family not in FAMILIES:
        raise ConfigError(f"unknown task family {family!r} (known: {', '.join(FAMILIES)})",
                          key=f"{prefix}.family", line=lines.get(f"{prefix}.family"))
    allowed = TASK_KEYS["common"] | TASK_KEYS[family] | ({"eval_steps"} if prefix == "heldout" else set())
    _check_keys(spec, allowed, prefix, lines)
    g = lambda k, kind=None, d=None: _require(spec, k, lines, prefix, kind, d)
    count = g("count", int, 10)
    steps = g("steps", int, 20)
    if count < 1 or steps < 1:
        raise ConfigError("count and steps must be >= 1", key=f"{prefix}.count", line=lines.get(prefix))
    rng = np.random.default_rng(g("seed", int, default_seed))
    common = dict(steps=steps)
    try:
        rule = UpdateRule(float(g("alpha", (int, float), 0.05)), g("schedule", str, "constant"),
                          g("horizon", int, steps if g("schedule", str, "constant") == "cosine" else None))
    except ConfigError as exc:
        raise ConfigError(str(exc), key=f"{prefix}.{exc.key}", line=lines.get(f"{prefix}.{exc.key}"))
    if family == "quadratic":
        tasks = quadratic_tasks(count, g("dim", int, 2), rng, alpha=rule.alpha,
                                eig_range=tuple(g("eig_range", list, [0.2, 1.0])),
                                center_scale=float(g("center_scale", (int, float), 1.0)),
                                seed_offset=seed_offset, **common)
    elif family == "sinusoid_mlp":
        tasks = sinusoid_tasks(count, rng, alpha=rule.alpha, hidden=g("hidden", int, 20),
                               batch_size=g("batch_size", int, 10),
                               dataset_size=g("dataset_size", int, 200),
                               noise_std=float(g("noise_std", (int, float), 0.0)),
                               amplitude_range=tuple(g("amplitude_range", list, [0.1, 5.0])),
                               phase_range=tuple(g("phase_range", list, [0.0, math.pi])),
                               full_batch=g("full_batch", bool, False),
                               seed_offset=seed_offset, **common)
    else:
        tasks = classify_tasks(count, rng, dim=g("dim", int, 2), alpha=rule.alpha,
                               hidden=g("hidden", int, 8),
                               separation=float(g("separation", (int, float), 1.5)),
                               std=float(g("std", (int, float), 1.0)),
                               batch_size=g("batch_size", int, 20),
                               dataset_size=g("dataset_size", int, 200),
                               full_batch=g("full_batch", bool, False),
                               seed_offset=seed_offset, **common)
    return [replace(t, update_rule=rule) for t in tasks]


def parse_config(text: str, source: str = "<string>") -> ExperimentConfig:
    try:
        node = yaml.compose(text)
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        raise ConfigError(f"{source}: YAML syntax error: {getattr(exc, 'problem', exc)}",
                          line=mark.line + 1 if mark else None)
    if not isinstance(raw, dict):
        raise ConfigError(f"{source}: top level must be a mapping", line=1)
    lines = _Lines(node)
    _check_keys(raw, {"experiment", "tasks", "meta", "heldout"}, "", lines)
    if "tasks" not in raw:
        raise ConfigError("missing required section", key="tasks", line=1)
    exp = raw.get("experiment") or {}
    meta = raw.get("meta") or {}
    held = raw.get("heldout")
    _check_keys(exp, SECTION_KEYS["experiment"], "experiment", lines)
    _check_keys(meta, SECTION_KEYS["meta"], "meta", lines)

    seeds = _require(exp, "seeds", lines, "experiment", list, [0])
    if not seeds or not all(isinstance(s, int) and not isinstance(s, bool) for s in seeds):
        raise ConfigError("seeds must be a non-empty list of integers", key="experiment.seeds",
                          line=lines.get("experiment.seeds"))
    methods = _require(exp, "methods", lines, "experiment", list, ["leap"])
    for m in methods:
        if m not in METHODS:
            raise ConfigError(f"unknown method {m!r} (known: {', '.join(METHODS)})",
                              key="experiment.methods", line=lines.get("experiment.methods"))

    tasks_spec = raw["tasks"]
    if not isinstance(tasks_spec, dict):
        raise ConfigError("expected a mapping", key="tasks", line=lines.get("tasks"))
    pre = _build_tasks(tasks_spec, "tasks", lines, default_seed=0)
    dist = TaskDistribution(pre, replace=_require(tasks_spec, "replace", lines, "tasks", bool, True))

    heldout, eval_steps = [], 0
    if held is not None:
        if not isinstance(held, dict):
            raise ConfigError("expected a mapping", key="heldout", line=lines.get("heldout"))
        merged = {k: v for k, v in tasks_spec.items() if k not in ("count", "seed", "replace")}
        merged.update(held)
        _check_keys(held, SECTION_KEYS["heldout"], "heldout", lines)
        heldout = _build_tasks(merged, "heldout", lines, default_seed=1, seed_offset=10_000)
        eval_steps = _require(held, "eval_steps", lines, "heldout", int, merged.get("steps", 20))
        if heldout[0].dim != pre[0].dim:
            raise ConfigError("held-out tasks must have the same dimension as pretraining tasks",
                              key="heldout", line=lines.get("heldout"))

    gm = lambda k, kind=None, d=None: _require(meta, k, lines, "meta", kind, d)
    try:
        geo = GeometryConfig(p=gm("p", int, 1), include_loss=gm("include_loss", bool, True),
                             stabilize=gm("stabilize", bool, True),
                             zero_norm_eps=float(gm("zero_norm_eps", (int, float), 1e-12)))
        adam_raw = gm("adam", dict, {})
        _check_keys(adam_raw, SECTION_KEYS["adam"], "meta.adam", lines)
        mc = MetaConfig(
            geometry=geo,
            beta=float(gm("beta", (int, float), 0.1)),
            batch_size=gm("batch_size", int, min(5, len(pre))),
            meta_steps=gm("steps", int, 100),
            optimizer=gm("optimizer", str, "sgd"),
            adam=AdamConfig(**{k: float(v) for k, v in adam_raw.items()}),
            early_stop_tol=gm("early_stop_tol", (int, float), None),
            snapshot_every=gm("snapshot_every", int, 0),
            threads=_require(exp, "threads", lines, "experiment", int, 1),
        )
    except ConfigError as exc:
        path = f"meta.{exc.key}" if exc.key else "meta"
        raise ConfigError(str(exc).split(" (key")[0], key=path, line=lines.get(path))
    steps = {}
    if "reptile_step" in meta:
        steps["reptile"] = float(gm("reptile_step", (int, float)))
    if "fomaml_lr" in meta:
        steps["fomaml"] = float(gm("fomaml_lr", (int, float)))
    return ExperimentConfig(
        raw=raw, seeds=list(seeds), methods=list(methods),
        out=Path(_require(exp, "out", lines, "experiment", str, "runs")),
        distribution=dist, heldout=heldout, eval_steps=eval_steps, meta=mc,
        method_steps=steps, source=source,
    )


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}")
    return parse_config(text, str(path))
