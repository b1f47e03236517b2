"""Command-line entry point: ``leap train|evaluate|verify|ablate``.

Exit codes: 0 success, 1 failed verification, 2 configuration error,
3 numerical failure.  Output layout under ``--out`` (default from config)::

    <method>/seed<N>/history.csv      one row per meta step
    <method>/seed<N>/checkpoint.bin   final initialization
    <method>/seed<N>/step<S>.bin      snapshots when meta.snapshot_every > 0
    <method>/seed<N>/timing.json      wall-clock only, kept out of the CSVs
    eval.csv, curves.csv              written by ``evaluate``
    ablation.csv                      written by ``ablate``
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from .checkpoint import config_hash, load_checkpoint, save_checkpoint
from .config import ExperimentConfig, load_config
from .errors import ConfigError, NumericalError, UnsupportedError
from .meta import METHODS, evaluate_transfer, pretrain
from .metrics import EVAL_COLUMNS, summarize
from .verify import run_ablation

log = logging.getLogger("leap")

EXIT_OK, EXIT_VERIFY_FAILED, EXIT_CONFIG, EXIT_NUMERICAL = 0, 1, 2, 3
HISTORY_COLUMNS = ("step", "mean_distance", "meta_grad_norm", "mean_loss", "mean_final_loss",
                   "dropped")
LOG_LEVELS = {"error": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}


def _fmt(x) -> str:
    return repr(float(x))


def _writer(fh):
    return csv.writer(fh, lineterminator="\n")


def init_rng(seed: int):
    return np.random.default_rng([seed, 13])


def pretrain_rng(seed: int):
    return np.random.default_rng([seed, 17])


def eval_rng(seed: int):
    return np.random.default_rng([seed, 19])


def run_dir(out: Path, method: str, seed: int) -> Path:
    return Path(out) / method / f"seed{seed}"


def _setup(args) -> ExperimentConfig:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg.seeds = [args.seed]
    if args.out is not None:
        cfg.out = Path(args.out)
    if getattr(args, "method", None):
        if args.method not in METHODS:
            raise ConfigError(f"unknown method {args.method!r} (known: {', '.join(METHODS)})",
                              key="--method")
        cfg.methods = [args.method]
    if args.threads is not None:
        if args.threads < 1:
            raise ConfigError("--threads must be >= 1", key="--threads")
        cfg.meta = replace(cfg.meta, threads=args.threads)
    if args.command == "train":
        cfg.meta = replace(cfg.meta, keep_paths=not args.streaming)
    return cfg


# ------------------------------------------------------------------ train


def train_one(cfg: ExperimentConfig, method: str, seed: int) -> Path:
    d = run_dir(cfg.out, method, seed)
    d.mkdir(parents=True, exist_ok=True)
    mcfg = cfg.meta_for(method)
    h = config_hash({"config": cfg.raw, "method": method, "seed": seed})
    theta0 = cfg.distribution.tasks[0].init_params(init_rng(seed))

    def snapshot(rec):
        if rec.theta0 is not None:
            save_checkpoint(d / f"step{rec.step + 1}.bin", rec.theta0, rec.step + 1, h)

    t0 = time.perf_counter()
    theta, hist = pretrain(method, cfg.distribution, mcfg, pretrain_rng(seed), theta0, snapshot)
    wall = time.perf_counter() - t0
    with open(d / "history.csv", "w", encoding="utf-8", newline="") as fh:
        w = _writer(fh)
        w.writerow(HISTORY_COLUMNS)
        for r in hist:
            w.writerow([r.step, _fmt(r.mean_distance), _fmt(r.meta_grad_norm), _fmt(r.mean_loss),
                        _fmt(r.mean_final_loss), r.dropped])
    save_checkpoint(d / "checkpoint.bin", theta, len(hist), h)
    (d / "timing.json").write_text(json.dumps({"wall_s": wall, "meta_steps": len(hist)}) + "\n")
    log.info("%s seed %d: %d meta steps in %.2fs -> %s", method, seed, len(hist), wall, d)
    return d


def cmd_train(args) -> int:
    cfg = _setup(args)
    for method in cfg.methods:
        for seed in cfg.seeds:
            train_one(cfg, method, seed)
    return EXIT_OK


# ------------------------------------------------------------------ evaluate


def evaluate_checkpoint(cfg: ExperimentConfig, theta, method: str, seed: int):
    if not cfg.heldout:
        raise ConfigError("config has no heldout section", key="heldout")
    dim = cfg.heldout[0].dim
    if theta.size != dim:
        raise ConfigError(f"checkpoint dimension {theta.size} does not match held-out tasks ({dim})",
                          key="checkpoint")
    return evaluate_transfer(theta, cfg.heldout, cfg.eval_steps, eval_rng(seed), method=method,
                             seed=seed, threads=cfg.meta.threads)


def write_eval(out: Path, records) -> None:
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "eval.csv", "w", encoding="utf-8", newline="") as fh:
        w = _writer(fh)
        w.writerow(EVAL_COLUMNS)
        for r in records:
            w.writerow(r.row())
        for method in dict.fromkeys(r.method for r in records):
            rs = [r for r in records if r.method == method]
            stats = {f: summarize(rs, f) for f in ("loss", "error", "auc")}
            step = max(r.step for r in rs)
            for k, name in enumerate(("mean", "std")):
                w.writerow([method, "all", name, step] + [_fmt(stats[f][k]) for f in ("loss", "error", "auc")])
    with open(out / "curves.csv", "w", encoding="utf-8", newline="") as fh:
        w = _writer(fh)
        w.writerow(("method", "seed", "task", "step", "loss", "error"))
        for r in records:
            for i, (l, e) in enumerate(zip(r.losses, r.errors)):
                w.writerow([r.method, r.seed, r.task, i, _fmt(l), _fmt(e)])


def cmd_evaluate(args) -> int:
    cfg = _setup(args)
    records = []
    if args.checkpoint:
        try:
            ck = load_checkpoint(args.checkpoint)
        except OSError as exc:
            raise ConfigError(f"cannot read checkpoint: {exc.strerror}", key="--checkpoint")
        for seed in cfg.seeds:
            records += evaluate_checkpoint(cfg, ck.theta, args.method or "checkpoint", seed)
    else:
        for method in cfg.methods:
            for seed in cfg.seeds:
                path = run_dir(cfg.out, method, seed) / "checkpoint.bin"
                if not path.exists():
                    raise ConfigError(f"missing checkpoint {path}; run 'leap train' first",
                                      key="experiment.out")
                records += evaluate_checkpoint(cfg, load_checkpoint(path).theta, method, seed)
    write_eval(cfg.out, records)
    for method in dict.fromkeys(r.method for r in records):
        m, s = summarize([r for r in records if r.method == method], "auc")
        print(f"{method:16s} auc {m:.6g} +- {s:.3g}")
    return EXIT_OK


# ------------------------------------------------------------------ verify / ablate


def cmd_verify(args) -> int:
    from .suites import run_suite

    checks = run_suite(args.suite)
    report = {"suite": args.suite, "passed": all(c.passed for c in checks),
              "checks": [c.to_dict() for c in checks]}
    text = json.dumps(report, indent=2, default=float)
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text(text + "\n", encoding="utf-8")
    print(text)
    return EXIT_OK if report["passed"] else EXIT_VERIFY_FAILED


def cmd_ablate(args) -> int:
    cfg = _setup(args)
    cells = run_ablation(cfg.distribution, cfg.meta, cfg.seeds)
    cfg.out.mkdir(parents=True, exist_ok=True)
    with open(cfg.out / "ablation.csv", "w", encoding="utf-8", newline="") as fh:
        w = _writer(fh)
        w.writerow(("cell", "p", "stabilize", "include_loss", "seed", "meta_step", "loss"))
        for c in cells:
            for k, seed in enumerate(cfg.seeds):
                for s, v in enumerate(c.per_seed[k]):
                    w.writerow([c.label, c.p, int(c.stabilize), int(c.include_loss), seed, s, _fmt(v)])
            for s, v in enumerate(c.result):
                w.writerow([c.label, c.p, int(c.stabilize), int(c.include_loss), "mean", s, _fmt(v)])
    for c in cells:
        print(f"{c.label:16s} final {c.result[-1]:.6g}  auc {c.auc:.6g}")
    return EXIT_OK


# ------------------------------------------------------------------ main


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="leap", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config_required=True):
        p.add_argument("--config", required=config_required, help="experiment YAML file")
        p.add_argument("--seed", type=int, help="run only this seed")
        p.add_argument("--out", help="output directory (overrides experiment.out)")
        p.add_argument("--threads", type=int, help="worker threads for task batches")
        p.add_argument("--method", help="run only this method")

    p = sub.add_parser("train", help="pretrain initializations")
    common(p)
    p.add_argument("--streaming", action="store_true", help="do not keep full gradient paths")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="train on held-out tasks from saved checkpoints")
    common(p)
    p.add_argument("--checkpoint", help="evaluate this checkpoint instead of the trained runs")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("verify", help="run a verification suite and print a JSON report")
    p.add_argument("suite", help="gradients, theorem1, jacobian, ablation or reptile_reduction")
    p.add_argument("--out", help="also write the report here")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("ablate", help="run the eight-cell (p, stabilizer, loss) ablation")
    common(p)
    p.set_defaults(func=cmd_ablate)
    return parser


def _configure_logging():
    name = os.environ.get("LEAP_LOG", "error").lower()
    if name not in LOG_LEVELS:
        raise ConfigError(f"LEAP_LOG must be one of {', '.join(LOG_LEVELS)}, got {name!r}",
                          key="LEAP_LOG")
    logging.basicConfig(level=LOG_LEVELS[name], stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        _configure_logging()
        return args.func(args)
    except (ConfigError, UnsupportedError) as exc:
        print(f"leap: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalError as exc:
        print(f"leap: numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
