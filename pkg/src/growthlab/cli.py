"""Command-line entry point: ``growthlab <command> --config scenario.json``."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .errors import GrowthLabError
from .harness import (PipelineError, Scenario, _write_csv, run_scenario, with_overrides,
                      write_json)
from .params import load_config
from .simulate import simulate_paths

COMMANDS = ("validate", "solve", "clear", "simulate", "aggregate", "verify", "report")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="growthlab", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="scenario JSON file")
        p.add_argument("--out", default="out", help="artifact directory")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--force", action="store_true", help="continue past a failed validation")
        p.add_argument("--allow-unconverged", action="store_true")
        p.add_argument("--damping", type=float, default=None)
        p.add_argument("--max-iters", type=int, default=None)
        p.add_argument("--clearing-tol", type=float, default=None)
        p.add_argument("--eps", type=float, nargs="+", default=None)
        p.add_argument("--no-cache", action="store_true")
    return parser


def _scenario(args) -> Scenario:
    cfg = with_overrides(load_config(args.config), seed=args.seed, damping=args.damping,
                         max_iters=args.max_iters, clearing_tol=args.clearing_tol, eps=args.eps)
    return Scenario(cfg, use_cache=not args.no_cache)


def run(args) -> int:
    out = Path(args.out)
    if args.command == "report":
        cfg = with_overrides(load_config(args.config), seed=args.seed, damping=args.damping,
                             max_iters=args.max_iters, clearing_tol=args.clearing_tol,
                             eps=args.eps)
        report = run_scenario(cfg, out, force=args.force,
                              allow_unconverged=args.allow_unconverged,
                              use_cache=not args.no_cache)
        print(json.dumps({"scenario_hash": report["scenario_hash"],
                          "converged": report["clearing"]["converged"],
                          "forecasts": report["forecasts"]}))
        return 0

    sc = _scenario(args)
    out.mkdir(parents=True, exist_ok=True)
    if args.command == "validate":
        rep = sc.validation().to_dict()
        write_json(out / "validation.json", rep)
        print(json.dumps({"passed": rep["passed"], "failures": rep["failures"]}))
        return 0 if rep["passed"] or args.force else 2

    sc.require_valid(args.force)
    forecasts, clearing, policies = sc.require_converged(
        args.allow_unconverged or args.command == "solve")
    if args.command == "solve":
        for pol in policies:
            if pol is not None:
                (out / f"policy_{pol.class_id}.json").write_text(pol.to_json())
        print(json.dumps({"scenario_hash": sc.hash, "classes": sum(p is not None for p in policies)}))
    elif args.command == "clear":
        write_json(out / "clearing.json", {"scenario_hash": sc.hash,
                                           "forecasts": forecasts.to_list(),
                                           "clearing": clearing.to_dict()})
        print(json.dumps({"converged": clearing.converged, "iterations": clearing.iterations,
                          "max_residual": clearing.max_residual}))
    elif args.command == "simulate":
        sim = sc.cfg.simulation
        panel = simulate_paths(sc.tree, sc.params, forecasts, policies, sc.population,
                               seed=sim.seed, n_paths=sim.paths, mode=sim.mode,
                               scenario_hash=sc.hash)
        panel.write_csv(out / "panel.csv")
        print(json.dumps({"paths": sim.paths, "clamped": panel.clamped}))
    elif args.command == "aggregate":
        rows = sc.aggregation_rows(policies)
        _write_csv(out / "aggregation.csv", [{"scenario_hash": sc.hash, **r} for r in rows])
        _write_csv(out / "bounds.csv", sc.bounds_rows(policies))
        print(json.dumps(rows))
    elif args.command == "verify":
        res = sc.verify()
        write_json(out / "verify.json", res)
        print(json.dumps(res))
        return 0 if res["passed"] else 4
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return run(args)
    except PipelineError as exc:
        sys.stderr.write(json.dumps({"error": type(exc).__name__, "message": str(exc),
                                     "details": exc.payload}, default=str) + "\n")
        return exc.exit_code
    except (GrowthLabError, OSError) as exc:
        sys.stderr.write(json.dumps({"error": type(exc).__name__, "message": str(exc)}) + "\n")
        return 2 if isinstance(exc, ValueError) else 1


if __name__ == "__main__":
    sys.exit(main())
