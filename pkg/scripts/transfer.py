"""Held-out transfer on sinusoid regression: every method, several seeds.

    python scripts/transfer.py --seeds 0 1 2 3 4 5 6 7 8 9 --out results/transfer.json
"""

import argparse
import json

import numpy as np

from leap.experiments import compare_methods, paired_one_sided
from leap.meta import METHODS


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--seeds", type=int, nargs="+", default=list(range(10)))
    ap.add_argument("--methods", nargs="+", default=list(METHODS))
    ap.add_argument("--out", default=None)
    args = ap.parse_args()
    res = compare_methods(args.seeds, args.methods)
    auc = {m: [r.mean_auc for r in rs] for m, rs in res.items()}
    table = {}
    for m, v in auc.items():
        v = np.array(v)
        row = {"mean_auc": float(v.mean()), "std_auc": float(v.std(ddof=1)), "per_seed": v.tolist()}
        if m != "no_pretraining" and "no_pretraining" in auc:
            row["p_vs_random"] = paired_one_sided(v, auc["no_pretraining"])
        table[m] = row
        print(f"{m:16s} AUC {row['mean_auc']:.4f} +- {row['std_auc']:.4f}"
              + (f"  p={row['p_vs_random']:.2e}" if "p_vs_random" in row else ""))
    if args.out:
        with open(args.out, "w") as fh:
            json.dump(table, fh, indent=2)


if __name__ == "__main__":
    main()
