"""Relative precision of the identity approximation to the inner-loop Jacobian.

Prints rho for a grid of step sizes and step counts on a unit-spectral-radius
quadratic, and optionally on a small sinusoid MLP.
"""

import argparse

import numpy as np

from leap.suites import rho_table, unit_radius_quadratic
from leap.tasks import sinusoid_tasks

ALPHAS = (0.001, 0.01, 0.05, 0.1, 0.5)
STEPS = (1, 5, 10, 20, 50)


def show(name, table):
    print(name)
    print("alpha   " + "".join(f"K={k:<10d}" for k in STEPS))
    for a, row in table.items():
        print(f"{a:<8g}" + "".join(f"{v:<12.4g}" for v in row))


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--mlp", action="store_true", help="also run a 1-4-1 sinusoid MLP")
    args = ap.parse_args()
    task = unit_radius_quadratic(args.seed)
    show("quadratic, n=5, lambda_max=1", rho_table(task, np.zeros(task.dim), ALPHAS, STEPS))
    if args.mlp:
        mlp = sinusoid_tasks(1, np.random.default_rng(args.seed), hidden=4, full_batch=True)[0]
        theta = mlp.init_params(np.random.default_rng(args.seed))
        show("sinusoid MLP 1-4-1", rho_table(mlp, theta, ALPHAS, STEPS))


if __name__ == "__main__":
    main()
