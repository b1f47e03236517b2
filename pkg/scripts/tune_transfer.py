"""Pick each method's meta step size on tuning seeds disjoint from the acceptance seeds.

    python scripts/tune_transfer.py --seeds 100 101 102 103 104 105
"""

import argparse
import json

import numpy as np

from leap.experiments import SinusoidSuite, transfer_trial

GRID = {
    "leap": [0.005, 0.01, 0.015, 0.02, 0.025, 0.03, 0.04],
    "reptile": [0.1, 0.3, 0.5, 1.0],
    "fomaml": [0.001, 0.003, 0.01, 0.03, 0.06, 0.1],
}


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--seeds", type=int, nargs="+", default=list(range(100, 106)))
    ap.add_argument("--methods", nargs="+", default=list(GRID))
    ap.add_argument("--steps", type=float, nargs="+", help="override the grid (one method only)")
    ap.add_argument("--optimizer", default=None, choices=["sgd", "adam"])
    ap.add_argument("--out", default=None)
    args = ap.parse_args()
    suite = SinusoidSuite()
    table = {}
    for method in args.methods:
        scores = {}
        for step in args.steps or GRID[method]:
            aucs = [transfer_trial(s, method, suite, step, optimizer=args.optimizer).mean_auc for s in args.seeds]
            scores[step] = float(np.mean(aucs))
            print(f"{method:8s} step={step:<6g} mean AUC={scores[step]:.4f}", flush=True)
        best = min(scores, key=scores.get)
        table[method] = {"best": best, "scores": scores}
        print(f"{method:8s} -> {best}", flush=True)
    if args.out:
        with open(args.out, "w") as fh:
            json.dump(table, fh, indent=2)


if __name__ == "__main__":
    main()
