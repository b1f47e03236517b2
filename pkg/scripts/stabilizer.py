"""Meta-training loss curves of Leap with and without the stabilizer on noisy sinusoids.

Writes ``seed,config,meta_step,loss`` rows for plotting.
"""

import argparse
import csv

from leap.experiments import StabilizerSuite, meta_loss_curve
from leap.geometry import GeometryConfig
from leap.verify import ABLATION_GRID, steps_to_threshold


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--seeds", type=int, nargs="+", default=list(range(10)))
    ap.add_argument("--all-cells", action="store_true", help="run all eight ablation cells")
    ap.add_argument("--out", default="results/stabilizer.csv")
    args = ap.parse_args()
    st = StabilizerSuite()
    cells = ABLATION_GRID if args.all_cells else [(1, True, True), (2, False, False)]
    with open(args.out, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["seed", "config", "meta_step", "loss"])
        for seed in args.seeds:
            hits = []
            for p, stab, inc in cells:
                geo = GeometryConfig(p=p, stabilize=stab, include_loss=inc)
                curve = meta_loss_curve(seed, geo, st)
                w.writerows([seed, geo.label, i, repr(float(v))] for i, v in enumerate(curve))
                hits.append(f"{geo.label}:{steps_to_threshold(curve, st.threshold)}")
            print(seed, " ".join(hits), flush=True)


if __name__ == "__main__":
    main()
