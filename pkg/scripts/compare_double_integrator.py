"""Closed-loop Chebyshev MPC vs discrete MPC on a 1-axis double integrator.

Writes t, x_cheb, x_discrete, u_cheb, u_discrete to a CSV and prints the
largest position gap as a fraction of full scale.
"""

import argparse
import csv
from pathlib import Path

import numpy as np

from chebmpc.simulation import compare_double_integrator


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", type=Path, default=Path("double_integrator.csv"))
    ap.add_argument("--x0", type=float, default=1.0)
    ap.add_argument("--steps", type=int, default=40)
    ap.add_argument("--Ts", type=float, default=0.5)
    ap.add_argument("--p", type=int, default=5, help="horizon in samples")
    ap.add_argument("--n", type=int, default=3, help="Chebyshev order")
    args = ap.parse_args()

    res = compare_double_integrator(x0=args.x0, steps=args.steps, Ts=args.Ts, p=args.p, n=args.n)
    with open(args.out, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "x_cheb", "x_discrete", "u_cheb", "u_discrete"])
        u_c = np.append(res.u_cheb, np.nan)
        u_d = np.append(res.u_discrete, np.nan)
        for row in zip(res.t, res.x_cheb, res.x_discrete, u_c, u_d):
            w.writerow([repr(float(v)) for v in row])
    scale = np.abs(res.x_discrete).max()
    print(f"max position gap {res.max_deviation:.4g} ({100 * res.max_deviation / scale:.1f}% of full scale)")
    print(f"final positions: chebyshev {res.x_cheb[-1]:.3g}, discrete {res.x_discrete[-1]:.3g}")
    print(f"wrote {args.out}")


if __name__ == "__main__":
    main()
