"""Solver versus brute-force oracle on the small stochastic trees.

    python3 scripts/oracle_sweep.py --out oracle.csv
"""

import argparse
import csv
import sys
import time

import numpy as np

from growthlab.econ import Forecasts
from growthlab.oracle import OracleSpec, compare_policy
from growthlab.scenarios import oracle_scenarios
from growthlab.solver import solve_policy


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--Omega", type=float, default=0.3, help="constant forecast at every node")
    ap.add_argument("--probes", type=int, default=20)
    ap.add_argument("--out", default=None, help="CSV path (stdout when omitted)")
    args = ap.parse_args(argv)
    omegas = np.geomspace(1e-3, 1.0, args.probes)
    rows = []
    for label, tree, params in oracle_scenarios():
        t0 = time.perf_counter()
        f = Forecasts.constant(tree, args.Omega)
        pol, _ = solve_policy(tree, params, f)
        dev = compare_policy(pol, OracleSpec(tree), omegas)
        rows.append({"scenario": label, "T": params.T, "sigma": params.sigma,
                     "max_deviation": dev, "seconds": round(time.perf_counter() - t0, 3)})
    fh = open(args.out, "w", newline="") if args.out else sys.stdout
    w = csv.DictWriter(fh, fieldnames=list(rows[0]))
    w.writeheader()
    w.writerows(rows)
    if args.out:
        fh.close()


if __name__ == "__main__":
    main()
