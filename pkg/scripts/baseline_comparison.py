"""Spread of log Z_hat for ATAIS and for standard AIS on the joint (theta, sigma) space.

Both use the same number of forward-model evaluations per run.

    python scripts/baseline_comparison.py --N 1000 --seeds 100
"""
import argparse

import numpy as np

from atais.experiments import toy_baseline_log_Z, toy_setup, toy_sweep


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--N", type=int, nargs="+", default=[100, 1000])
    ap.add_argument("--T", type=int, default=10)
    ap.add_argument("--seeds", type=int, default=100)
    args = ap.parse_args()

    setup = toy_setup()
    log_Z = setup.truth["log_Z"]
    seeds = range(args.seeds)
    print(f"oracle log Z = {log_Z:.4f}")
    print(f"{'N':>6} {'method':>12} {'mean err':>9} {'var':>8}")
    for N in args.N:
        ours = toy_sweep(setup, N, seeds, args.T).log_Z
        base = toy_baseline_log_Z(setup, N, seeds, args.T)
        for name, v in (("ATAIS", ours), ("standard AIS", base)):
            print(f"{N:>6} {name:>12} {np.mean(v) - log_Z:>+9.3f} {np.var(v):>8.4f}")


if __name__ == "__main__":
    main()
