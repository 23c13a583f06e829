"""Root total variation of the savings rate across population sizes.

Shocks and forecasts are held fixed while N changes the uniform
employment support.

    python3 scripts/tv_sweep.py --N 10 100 1000 --sigma 0.5 1 2 --T 2 3 4
"""

import argparse
import csv
import sys

from growthlab.aggregation import total_variation
from growthlab.econ import Forecasts
from growthlab.params import EconomyParams
from growthlab.scenarios import uniform_spec
from growthlab.shocks import build_event_tree
from growthlab.solver import solve_policy


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--N", type=int, nargs="+", default=[10, 100, 1000])
    ap.add_argument("--sigma", type=float, nargs="+", default=[0.5, 1.0, 2.0])
    ap.add_argument("--T", type=int, nargs="+", default=[2, 3, 4])
    ap.add_argument("--u", type=float, default=0.1)
    ap.add_argument("--Omega", type=float, default=0.3)
    args = ap.parse_args(argv)
    w = csv.writer(sys.stdout)
    w.writerow(["sigma", "T"] + [f"tv_N{n}" for n in args.N] + ["relative_spread"])
    for sigma in args.sigma:
        for T in args.T:
            tvs = []
            for N in args.N:
                params = EconomyParams(alpha=0.36, beta=0.95, sigma=sigma, T=T, N=N)
                tree = build_event_tree(uniform_spec(args.u), params)
                pol, _ = solve_policy(tree, params, Forecasts.constant(tree, args.Omega))
                tvs.append(total_variation(pol, 0, 0).value)
            spread = (max(tvs) - min(tvs)) / max(tvs)
            w.writerow([sigma, T] + [f"{v:.6f}" for v in tvs] + [f"{spread:.4f}"])


if __name__ == "__main__":
    main()
