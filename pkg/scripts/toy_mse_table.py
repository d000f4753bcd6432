"""MSE of the toy-model estimators against the grid oracle for several N.

    python scripts/toy_mse_table.py --N 10 100 1000 --seeds 100
"""
import argparse

import numpy as np

from atais.experiments import toy_setup, toy_sweep


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--N", type=int, nargs="+", default=[10, 100, 1000])
    ap.add_argument("--T", type=int, default=10)
    ap.add_argument("--seeds", type=int, default=100)
    ap.add_argument("--data-seed", type=int, default=1)
    args = ap.parse_args()

    setup = toy_setup(args.data_seed)
    t = setup.truth
    print(f"oracle: E[theta|y,sigma_ML]={t['cond_ml_mean']:.5f} sigma_ML={t['sigma_ml']:.5f} "
          f"E[sigma|y]={t['sigma_mean']:.5f} log Z={t['log_Z']:.4f}")
    print(f"{'N':>6} {'E[theta|y,sML]':>15} {'sigma_ML':>11} {'E[sigma|y]':>11} "
          f"{'sd log Z':>9} {'sec':>6}")
    for N in args.N:
        sw = toy_sweep(setup, N, range(args.seeds), args.T)
        mse = sw.mse(t)
        print(f"{N:>6} {mse[0]:>15.3e} {mse[1]:>11.3e} {mse[2]:>11.3e} "
              f"{np.std(sw.log_Z):>9.3f} {sw.seconds:>6.1f}")


if __name__ == "__main__":
    main()
