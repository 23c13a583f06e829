"""Scenario parameters and configuration dataclasses.

Scenario files are JSON documents carrying a ``spec_version`` field::

    {
      "spec_version": 1,
      "name": "uniform-u10",
      "economy": {"alpha": 0.36, "beta": 0.95, "sigma": 1.0, "delta": 1.0,
                  "T": 3, "N": 100, "Y1": 1.0},
      "process": {"kind": "uniform-employment", "u": 0.1, "min_unemp_prob": 0.05},
      "population": {"capital": "equal"},
      "solver": {"n_grid": 400},
      "auctioneer": {"damping": 0.5},
      "analysis": {"eps": [0.1, 0.05, 0.01]},
      "simulation": {"paths": 20, "seed": 7}
    }

Every section except ``economy`` and ``process`` is optional.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any

from .errors import DomainError, ValidationError

SPEC_VERSION = 1
PROCESS_KINDS = ("uniform-employment", "ks-markov", "explicit-tree")


@dataclass(frozen=True)
class EconomyParams:
    alpha: float
    beta: float
    sigma: float
    delta: float = 1.0
    T: int = 2
    N: int = 1
    Y1: float = 1.0
    L_norm: float = 1.0

    def __post_init__(self):
        if not 0.0 < self.alpha <= 1.0:
            raise DomainError(f"alpha must lie in (0, 1], got {self.alpha}")
        if not 0.0 < self.beta < 1.0:
            raise DomainError(f"beta must lie in (0, 1), got {self.beta}")
        if not self.sigma > 0.0:
            raise DomainError(f"sigma must be positive, got {self.sigma}")
        if not 0.0 < self.delta <= 1.0:
            raise DomainError(f"delta must lie in (0, 1], got {self.delta}")
        for name in ("T", "N"):
            value = getattr(self, name)
            if isinstance(value, bool) or int(value) != value or value < 1:
                raise DomainError(f"{name} must be an integer >= 1, got {value}")
            object.__setattr__(self, name, int(value))
        if not self.Y1 > 0.0:
            raise DomainError(f"Y1 must be positive, got {self.Y1}")
        if not self.L_norm > 0.0:
            raise DomainError(f"L_norm must be positive, got {self.L_norm}")

    @property
    def log_utility(self) -> bool:
        return self.sigma == 1.0


@dataclass(frozen=True)
class ProcessSpec:
    """Declarative description of the aggregate and employment shocks.

    ``uniform-employment`` uses ``u`` and a constant shock ``z``.
    ``ks-markov`` uses ``z_g``, ``z_b``, the aggregate transition matrix
    ``p`` (rows/cols ordered good, bad) and the joint transition array
    ``pi[s][s'][e][e']`` whose sums over ``e'`` equal ``p[s][s']``.
    ``explicit-tree`` carries a literal tree document in ``tree``.
    """

    kind: str
    min_unemp_prob: float = 0.01
    u: float | None = None
    z: float = 1.0
    z_g: float | None = None
    z_b: float | None = None
    p: tuple | None = None
    pi: tuple | None = None
    initial_state: str = "g"
    u0: float | None = None
    tree: dict | None = None
    z_max: float | None = None

    def __post_init__(self):
        if self.kind not in PROCESS_KINDS:
            raise ValidationError(f"unknown process kind {self.kind!r}")
        if not self.min_unemp_prob > 0.0:
            raise ValidationError("min_unemp_prob must be positive")
        if self.kind == "uniform-employment":
            if self.u is None or not 0.0 < self.u < 1.0:
                raise ValidationError(f"uniform-employment needs 0 < u < 1, got {self.u}")
            if not self.z > 0.0:
                raise ValidationError("z must be positive")
        elif self.kind == "ks-markov":
            self._check_ks()
        elif self.tree is None:
            raise ValidationError("explicit-tree needs a 'tree' document")

    def _check_ks(self):
        if self.z_g is None or self.z_b is None or not self.z_g > self.z_b > 0.0:
            raise ValidationError("ks-markov needs z_g > z_b > 0")
        if self.p is None or self.pi is None:
            raise ValidationError("ks-markov needs both p and pi")
        if self.initial_state not in ("g", "b"):
            raise ValidationError("initial_state must be 'g' or 'b'")
        if self.u0 is not None and not 0.0 <= self.u0 < 1.0:
            raise ValidationError("u0 must lie in [0, 1)")
        p = [[float(x) for x in row] for row in self.p]
        if len(p) != 2 or any(len(row) != 2 for row in p):
            raise ValidationError("p must be 2x2")
        for row in p:
            if min(row) < 0.0 or abs(sum(row) - 1.0) > 1e-12:
                raise ValidationError(f"rows of p must be probability vectors, got {row}")
        for s in range(2):
            for s2 in range(2):
                for e in range(2):
                    cell = [float(x) for x in self.pi[s][s2][e]]
                    if len(cell) != 2 or min(cell) < 0.0:
                        raise ValidationError("pi entries must be non-negative pairs")
                    if p[s][s2] == 0.0:
                        continue
                    if abs(sum(cell) / p[s][s2] - 1.0) > 1e-12:
                        raise ValidationError(
                            f"conditional employment mass for (s={s}, s'={s2}, e={e}) "
                            f"is {sum(cell) / p[s][s2]!r}, expected 1"
                        )


@dataclass(frozen=True)
class SolverOptions:
    n_grid: int = 400
    omega_min: float = 1e-6
    n_refine: int = 16
    bisect_iters: int = 50
    foc_tol: float = 1e-8


@dataclass(frozen=True)
class AuctioneerOptions:
    damping: float = 0.5
    max_iters: int = 200
    clearing_tol: float = 1e-8
    enumeration_cap: int = 200_000
    n_samples: int = 256
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.damping <= 1.0:
            raise DomainError("damping must lie in (0, 1]")


@dataclass(frozen=True)
class PopulationOptions:
    """Initial wealth shares omega_j = (1 - alpha) e_j1 + alpha s_j0.

    ``capital`` is ``"equal"``, ``"dirichlet"`` or an explicit list of s_j0.
    """

    capital: Any = "equal"
    concentration: float = 1.0
    seed: int = 0
    employment: str = "exact"


@dataclass(frozen=True)
class AnalysisOptions:
    eps: tuple = (0.1, 0.05, 0.01)
    N_sweep: tuple = ()
    probe_omegas: tuple = ()


@dataclass(frozen=True)
class SimulationOptions:
    paths: int = 10
    seed: int = 0
    mode: str = "exact"


@dataclass(frozen=True)
class ScenarioConfig:
    economy: EconomyParams
    process: ProcessSpec
    name: str = "scenario"
    solver: SolverOptions = field(default_factory=SolverOptions)
    auctioneer: AuctioneerOptions = field(default_factory=AuctioneerOptions)
    population: PopulationOptions = field(default_factory=PopulationOptions)
    analysis: AnalysisOptions = field(default_factory=AnalysisOptions)
    simulation: SimulationOptions = field(default_factory=SimulationOptions)
    spec_version: int = SPEC_VERSION

    def to_dict(self) -> dict:
        return _jsonable(asdict(self))

    def scenario_hash(self) -> str:
        canonical = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:16]


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, float) and not math.isfinite(obj):
        return repr(obj)
    return obj


def _freeze(obj):
    if isinstance(obj, list):
        return tuple(_freeze(v) for v in obj)
    return obj


def _build(cls, data: dict | None, section: str):
    data = dict(data or {})
    known = {f.name for f in fields(cls)}
    unknown = set(data) - known
    if unknown:
        raise ValidationError(f"unknown keys in '{section}': {sorted(unknown)}")
    frozen = {k: (v if k == "tree" else _freeze(v)) for k, v in data.items()}
    try:
        return cls(**frozen)
    except TypeError as exc:
        raise ValidationError(f"bad '{section}' section: {exc}") from exc


def config_from_dict(doc: dict) -> ScenarioConfig:
    if not isinstance(doc, dict):
        raise ValidationError("scenario document must be a JSON object")
    version = doc.get("spec_version")
    if version != SPEC_VERSION:
        raise ValidationError(f"unsupported spec_version {version!r} (expected {SPEC_VERSION})")
    for required in ("economy", "process"):
        if required not in doc:
            raise ValidationError(f"missing required section '{required}'")
    allowed = {"spec_version", "name", "economy", "process", "solver", "auctioneer",
               "population", "analysis", "simulation"}
    extra = set(doc) - allowed
    if extra:
        raise ValidationError(f"unknown top-level keys: {sorted(extra)}")
    return ScenarioConfig(
        economy=_build(EconomyParams, doc["economy"], "economy"),
        process=_build(ProcessSpec, doc["process"], "process"),
        name=str(doc.get("name", "scenario")),
        solver=_build(SolverOptions, doc.get("solver"), "solver"),
        auctioneer=_build(AuctioneerOptions, doc.get("auctioneer"), "auctioneer"),
        population=_build(PopulationOptions, doc.get("population"), "population"),
        analysis=_build(AnalysisOptions, doc.get("analysis"), "analysis"),
        simulation=_build(SimulationOptions, doc.get("simulation"), "simulation"),
    )


def load_config(path: str | Path) -> ScenarioConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: not valid JSON ({exc})") from exc
    return config_from_dict(doc)
