"""Binned versus exact aggregate investment at cleared forecasts.

    python3 scripts/aggregation_sweep.py --N 10 100 1000 --eps 0.1 0.05 0.01
"""

import argparse
import csv
import sys

import numpy as np

from growthlab.aggregation import (aggregation_error, bin_agents, exact_aggregate, reshuffle,
                                   within_bin_spread)
from growthlab.auctioneer import solve_forecasts
from growthlab.econ import TreeEconomy
from growthlab.params import EconomyParams, PopulationOptions
from growthlab.population import initial_population
from growthlab.scenarios import uniform_spec
from growthlab.shocks import build_event_tree


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--N", type=int, nargs="+", default=[10, 100, 1000])
    ap.add_argument("--eps", type=float, nargs="+", default=[0.1, 0.05, 0.01])
    ap.add_argument("--sigma", type=float, default=1.0)
    ap.add_argument("--T", type=int, default=3)
    ap.add_argument("--reshuffles", type=int, default=100)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)
    w = csv.writer(sys.stdout)
    w.writerow(["N", "eps", "bins", "occupied", "error_ratio", "count_ratio", "spread",
                "max_reshuffle_ratio", "converged"])
    for N in args.N:
        params = EconomyParams(alpha=0.36, beta=0.95, sigma=args.sigma, T=args.T, N=N)
        tree = build_event_tree(uniform_spec(0.1), params)
        pop = initial_population(tree, params, PopulationOptions("dirichlet", seed=args.seed))
        f, rep = solve_forecasts(tree, params, pop)
        pols = rep.policies
        Y1 = TreeEconomy(tree, params, f).Y_eff[0]
        for eps in args.eps:
            b = bin_agents(pop, pols, eps, Y1)
            err = aggregation_error(b, pop, pols, Y1)
            base = exact_aggregate(pop, pols, Y1)
            rng = np.random.default_rng([args.seed, N])
            moves = [abs(exact_aggregate(reshuffle(b, pop, rng), pols, Y1) - base)
                     for _ in range(args.reshuffles)]
            w.writerow([N, eps, b.M, b.occupied, f"{err / (eps * Y1):.4f}",
                        f"{b.count_ratio:.3f}", f"{within_bin_spread(b, pop, pols):.4f}",
                        f"{max(moves, default=0.0) / (eps * Y1):.4f}", rep.converged])


if __name__ == "__main__":
    main()
