"""Scenario pipeline: validate, solve, clear, simulate, analyze, write artifacts."""

from __future__ import annotations

import csv
import dataclasses
import json
import os
import time
from pathlib import Path

import numpy as np

from . import __version__
from .aggregation import (aggregation_error, bin_agents, derivative_checks,
                          total_variation, within_bin_spread)
from .auctioneer import ClearingReport, solve_forecasts
from .econ import Forecasts, TreeEconomy
from .errors import GrowthLabError, ValidationError
from .oracle import OracleSpec, compare_policy
from .params import ScenarioConfig
from .population import initial_population
from .shocks import build_event_tree, validate_process
from .simulate import RNG_NAME, simulate_paths
from .solver import Policy, gamma_lower_bound, gamma_upper_bound, solve_policy

CACHE_ENV = "GROWTHLAB_CACHE"
ORACLE_TOL = 1e-4


class PipelineError(GrowthLabError):
    """A pipeline stage refused to continue; ``payload`` explains why."""

    def __init__(self, message: str, payload: dict, exit_code: int):
        super().__init__(message)
        self.payload = payload
        self.exit_code = exit_code


def cache_dir() -> Path:
    return Path(os.environ.get(CACHE_ENV, Path.home() / ".cache" / "growthlab"))


def with_overrides(cfg: ScenarioConfig, *, seed=None, damping=None, max_iters=None,
                   clearing_tol=None, eps=None) -> ScenarioConfig:
    auct = cfg.auctioneer
    changes = {k: v for k, v in (("damping", damping), ("max_iters", max_iters),
                                 ("clearing_tol", clearing_tol)) if v is not None}
    if changes:
        auct = dataclasses.replace(auct, **changes)
    sim = cfg.simulation if seed is None else dataclasses.replace(cfg.simulation, seed=seed)
    analysis = cfg.analysis if eps is None else dataclasses.replace(cfg.analysis, eps=tuple(eps))
    return dataclasses.replace(cfg, auctioneer=auct, simulation=sim, analysis=analysis)


class Scenario:
    """Lazily evaluated pipeline stages for one configuration."""

    def __init__(self, cfg: ScenarioConfig, use_cache: bool = True):
        self.cfg = cfg
        self.hash = cfg.scenario_hash()
        self.use_cache = use_cache
        self.timing: dict[str, float] = {}
        self.cache_hit = False
        t0 = time.perf_counter()
        self.tree = build_event_tree(cfg.process, cfg.economy)
        self.population = initial_population(self.tree, cfg.economy, cfg.population)
        self.timing["build"] = time.perf_counter() - t0
        self._clearing = None

    @property
    def params(self):
        return self.cfg.economy

    def validation(self):
        return validate_process(self.tree, self.cfg.process.min_unemp_prob,
                                assignment=self.population.classes)

    def require_valid(self, force: bool) -> dict:
        rep = self.validation()
        if not rep.passed and not force:
            raise PipelineError("shock process failed validation", rep.to_dict(), 2)
        return rep.to_dict()

    # -- solve / clear --------------------------------------------------------

    def _cache_path(self) -> Path:
        return cache_dir() / f"{self.hash}.json"

    def clearing(self) -> tuple[Forecasts, ClearingReport, tuple]:
        if self._clearing is not None:
            return self._clearing
        t0 = time.perf_counter()
        path = self._cache_path()
        if self.use_cache and path.exists():
            doc = json.loads(path.read_text())
            forecasts = Forecasts(tuple(float("nan") if x is None else x for x in doc["forecasts"]))
            econ = TreeEconomy(self.tree, self.params, forecasts)
            policies = tuple(None if p is None else Policy.from_dict(p, econ, self.hash)
                             for p in doc["policies"])
            c = doc["clearing"]
            report = ClearingReport(
                residuals={int(k): v for k, v in c["residuals"].items()},
                iterations=c["iterations"], converged=c["converged"], damping=c["damping"],
                tolerance=c["tolerance"], history=tuple(c["history"]),
                std_errors={int(k): v for k, v in c["std_errors"].items()}, mode=c["mode"],
                projections=c["projections"], clamped={int(k): v for k, v in c["clamped"].items()},
                message=c["message"], policies=policies)
            self.cache_hit = True
        else:
            forecasts, report = solve_forecasts(self.tree, self.params, self.population,
                                                self.cfg.auctioneer, self.cfg.solver,
                                                scenario_hash=self.hash)
            policies = report.policies
            if self.use_cache:
                path.parent.mkdir(parents=True, exist_ok=True)
                doc = {"scenario_hash": self.hash, "forecasts": forecasts.to_list(),
                       "clearing": report.to_dict(),
                       "policies": [None if p is None else p.to_dict() for p in policies]}
                tmp = path.with_suffix(".tmp")
                tmp.write_text(json.dumps(doc))
                tmp.replace(path)
        self.timing["clear"] = time.perf_counter() - t0
        self._clearing = (forecasts, report, policies)
        return self._clearing

    def require_converged(self, allow_unconverged: bool):
        forecasts, report, policies = self.clearing()
        if not report.converged and not allow_unconverged:
            raise PipelineError("auctioneer did not converge", report.to_dict(), 3)
        return forecasts, report, policies

    # -- analysis -------------------------------------------------------------

    def aggregation_rows(self, policies) -> list[dict]:
        rows = []
        forecasts = self.clearing()[0]
        Y1 = TreeEconomy(self.tree, self.params, forecasts).Y_eff[0]
        pop = self.population
        for eps in self.cfg.analysis.eps:
            binning = bin_agents(pop, policies, eps, Y1)
            err = aggregation_error(binning, pop, policies, Y1)
            tv = max(total_variation(p, 0, p.default_state(0)).value
                     for p in policies if p is not None)
            rows.append({"scenario": self.cfg.name, "N": pop.N, "eps": eps, "bins": binning.M,
                         "occupied": binning.occupied, "error": err,
                         "ratio": err / (eps * Y1), "spread": within_bin_spread(binning, pop, policies),
                         "count_ratio": binning.count_ratio, "tv": tv})
        return rows

    def bounds_rows(self, policies) -> list[dict]:
        forecasts = self.clearing()[0]
        upper = gamma_upper_bound(self.tree, forecasts, self.params)
        rows = []
        for pol in policies:
            if pol is None:
                continue
            lower, _ = gamma_lower_bound(self.tree, forecasts, self.params, pol.class_id)
            for (node, state), g in sorted(pol.gamma.items()):
                lo, hi = lower[(node, state)], upper[node]
                for w, gv in zip(pol.grids[node], g):
                    rows.append({"class": pol.class_id, "node": node, "state": state,
                                 "omega": float(w), "gamma": float(gv), "lower": lo, "upper": hi})
        return rows

    def derivative_summary(self, policies) -> dict:
        out = {}
        for pol in policies:
            if pol is None:
                continue
            for (node, state) in sorted(pol.gamma):
                d = derivative_checks(pol, node, state)
                out[f"{pol.class_id}:{node}:{state}"] = {
                    "min_slope": d.min_slope, "max_omega_slope": d.max_omega_slope,
                    "max_scaled_slope": d.max_scaled_slope,
                    "max_envelope_error": d.max_envelope_error, "passed": d.passed}
        return out

    def tv_sweep(self) -> dict:
        """Root total variation across population sizes at the scenario's forecasts."""
        forecasts = self.clearing()[0]
        out = {}
        for N in self.cfg.analysis.N_sweep:
            params = dataclasses.replace(self.params, N=int(N))
            tree = build_event_tree(self.cfg.process, params)
            if len(tree.nodes) != len(self.tree.nodes):
                raise ValidationError("N sweep changed the tree shape")
            pol, _ = solve_policy(tree, params, forecasts, 0, self.cfg.solver)
            out[str(N)] = total_variation(pol, 0, pol.default_state(0)).value
        return out

    def verify(self, omegas=None) -> dict:
        forecasts, _, policies = self.clearing()
        omegas = np.asarray(omegas if omegas is not None else
                            (self.cfg.analysis.probe_omegas or np.geomspace(1e-3, 1.0, 20)))
        results = {}
        for pol in policies:
            if pol is None:
                continue
            spec = OracleSpec(self.tree, class_id=pol.class_id, scenario_hash=self.hash)
            dev = compare_policy(pol, spec, omegas, self.params, forecasts)
            results[str(pol.class_id)] = {"max_deviation": dev, "passed": dev <= ORACLE_TOL}
        return {"tolerance": ORACLE_TOL, "classes": results,
                "passed": all(r["passed"] for r in results.values())}


# -- writers ------------------------------------------------------------------

def _cell(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, np.integer):
        return int(v)
    return v


def _write_csv(path: Path, rows: list[dict]) -> None:
    if not rows:
        path.write_text("")
        return
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]))
        w.writeheader()
        for r in rows:
            w.writerow({k: _cell(v) for k, v in r.items()})


def _json_safe(obj):
    if isinstance(obj, dict):
        return {str(k): _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_safe(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return x if np.isfinite(x) else None
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def write_json(path: Path, doc: dict) -> None:
    path.write_text(json.dumps(_json_safe(doc), indent=2, sort_keys=True) + "\n")


def run_scenario(cfg: ScenarioConfig, out: str | Path, *, force: bool = False,
                 allow_unconverged: bool = False, use_cache: bool = True) -> dict:
    """Full pipeline; writes report.json, panel.csv, aggregation.csv and bounds.csv."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    sc = Scenario(cfg, use_cache=use_cache)
    validation = sc.require_valid(force)
    forecasts, clearing, policies = sc.require_converged(allow_unconverged)

    t0 = time.perf_counter()
    sim = cfg.simulation
    panel = simulate_paths(sc.tree, cfg.economy, forecasts, policies, sc.population,
                           seed=sim.seed, n_paths=sim.paths, mode=sim.mode,
                           scenario_hash=sc.hash)
    panel.write_csv(out / "panel.csv")
    sc.timing["simulate"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    agg = sc.aggregation_rows(policies)
    _write_csv(out / "aggregation.csv", [{"scenario_hash": sc.hash, **r} for r in agg])
    _write_csv(out / "bounds.csv", sc.bounds_rows(policies))
    derivs = sc.derivative_summary(policies)
    sweep = sc.tv_sweep()
    sc.timing["analyze"] = time.perf_counter() - t0

    realized = panel.clearing_residuals()[:, :-1]
    report = {
        "scenario": cfg.name,
        "scenario_hash": sc.hash,
        "version": __version__,
        "config": cfg.to_dict(),
        "validation": validation,
        "forecasts": forecasts.to_list(),
        "clearing": clearing.to_dict(),
        "simulation": {
            "paths": sim.paths, "seed": sim.seed, "mode": sim.mode,
            "rng": {"generator": RNG_NAME, "key": "(seed, path, period)"},
            "clamped": panel.clamped,
            "max_abs_realized_clearing": float(np.nanmax(np.abs(realized))) if realized.size else 0.0,
            "mean_realized_clearing": np.nanmean(realized, axis=0).tolist() if realized.size else [],
            "max_abs_accounting": float(np.abs(panel.accounting_residuals()).max()),
        },
        "aggregation": agg,
        "derivatives": derivs,
        "tv_sweep": sweep,
        "timing": {**sc.timing, "cache_hit": sc.cache_hit},
    }
    write_json(out / "report.json", report)
    return report
