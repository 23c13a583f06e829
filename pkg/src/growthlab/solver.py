"""Backward induction for the agent's savings problem on an event tree.

The agent at a node with wealth share ``omega`` (of effective output) picks
the savings rate ``gamma`` in [0, 1): it consumes ``(1 - gamma) omega Y`` and
enters each child with wealth share ``alpha omega gamma / Omega + (1 - alpha) e``.
Derivatives of next-period value come from the envelope identity
``V'(y) = Y^(1-sigma) / (y (1 - gamma(y)))^sigma``, so each node only needs the
children's savings tables.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicHermiteSpline

from .econ import Forecasts, TreeEconomy, wealth_transition
from .errors import ConsistencyError, DomainError
from .params import EconomyParams, SolverOptions
from .shocks import EventTree

__all__ = [
    "Policy", "SolveReport", "solve_policy", "foc_residual", "solve_gamma_at",
    "value_and_derivative", "gamma_upper_bound", "gamma_lower_bound",
    "wealth_transition", "utility",
]

INTERP = "hermite-log"
# log-wealth half-step used to get table slopes from neighbouring FOC solves
SLOPE_STEP = 1e-4
POLICY_FORMAT = 1
# decreases this small are bisection noise, not a failure of monotonicity
MONOTONE_NOISE = 1e-13
# bisection and rounding noise allowed when comparing tables against the analytic bounds
BOUND_SLACK = 1e-12


def utility(c, sigma: float):
    c = np.asarray(c, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        if sigma == 1.0:
            return np.log(c)
        return (c ** (1.0 - sigma) - 1.0) / (1.0 - sigma)


@dataclass(frozen=True)
class Branch:
    prob: float
    child: int
    e_eff: float
    next_state: int


def node_branches(tree: EventTree, econ: TreeEconomy, class_id: int, node_id: int,
                  state: int) -> list[Branch]:
    """Positive-probability (child, employment) outcomes leaving a node."""
    node = tree.nodes[node_id]
    out = []
    for child, p in zip(node.children, node.probs):
        if p <= 0.0:
            continue
        d = tree.dist(class_id, child, state)
        for e, pe, ns in zip(d.values, d.probs, d.next_states):
            if pe > 0.0:
                out.append(Branch(p * pe, child, e * econ.wage_scale[child], ns))
    return out


# -- analytic bounds ----------------------------------------------------------

def _bound_step(params: EconomyParams, moment: float) -> float:
    if moment <= 0.0:
        return 0.0
    sigma, alpha, beta = params.sigma, params.alpha, params.beta
    if sigma == 1.0:
        ratio = beta * moment
    else:
        ratio = (beta * alpha ** (1.0 - sigma) * moment) ** (1.0 / sigma)
    return ratio / (1.0 + ratio)


def _ratio_term(params, econ, node_id, child, g_child):
    if params.sigma == 1.0:
        return 1.0 / (1.0 - g_child)
    scale = econ.Y_eff[child] / (econ.forecasts[node_id] * econ.Y_eff[node_id])
    return scale ** (1.0 - params.sigma) * (1.0 - g_child) ** (-params.sigma)


def gamma_upper_bound(tree: EventTree, forecasts: Forecasts, params: EconomyParams,
                      econ: TreeEconomy | None = None) -> dict[int, float]:
    """Savings rate of an agent who never earns wages, per node.

    Evaluates 1/(1-g_h) = 1 + (beta alpha^(1-sigma) E[(Y'/(Omega Y))^(1-sigma)
    (1-g_{h-1})^(-sigma)])^(1/sigma) from the leaves toward the root.
    """
    econ = econ or TreeEconomy(tree, params, forecasts)
    g: dict[int, float] = {}
    for node in tree.bottom_up():
        if node.terminal:
            g[node.id] = 0.0
            continue
        moment = sum(p * _ratio_term(params, econ, node.id, c, g[c])
                     for c, p in zip(node.children, node.probs))
        g[node.id] = _bound_step(params, moment)
    return g


def gamma_lower_bound(tree: EventTree, forecasts: Forecasts, params: EconomyParams,
                      class_id: int = 0, econ: TreeEconomy | None = None
                      ) -> tuple[dict[tuple[int, int], float], list[tuple[int, int]]]:
    """Same recursion as the upper bound, restricted to the e = 0 event.

    Returns the bound per (node, own state) and the list of non-terminal
    (node, state) pairs where the unemployment mass is zero, for which the
    bound degenerates to 0.
    """
    econ = econ or TreeEconomy(tree, params, forecasts)
    n_states = len(tree.classes[class_id].states)
    g: dict[tuple[int, int], float] = {}
    degenerate = []
    for node in tree.bottom_up():
        for k in range(n_states):
            if node.terminal:
                g[(node.id, k)] = 0.0
                continue
            moment = 0.0
            for c, p in zip(node.children, node.probs):
                d = tree.dist(class_id, c, k)
                for e, pe, ns in zip(d.values, d.probs, d.next_states):
                    if e == 0.0 and pe > 0.0:
                        moment += p * pe * _ratio_term(params, econ, node.id, c, g[(c, ns)])
            if moment == 0.0:
                degenerate.append((node.id, k))
            g[(node.id, k)] = _bound_step(params, moment)
    return g, degenerate


# -- policy container ---------------------------------------------------------

def monotone_slopes(x: np.ndarray, y: np.ndarray, d: np.ndarray) -> np.ndarray:
    """Fritsch-Carlson limiting of Hermite slopes for non-decreasing data."""
    d = np.maximum(np.asarray(d, dtype=float), 0.0)
    secant = np.diff(y) / np.diff(x)
    for k, delta in enumerate(secant):
        if delta <= 0.0:
            d[k] = d[k + 1] = 0.0
            continue
        a, b = d[k] / delta, d[k + 1] / delta
        r = a * a + b * b
        if r > 9.0:
            tau = 3.0 / math.sqrt(r)
            d[k], d[k + 1] = tau * a * delta, tau * b * delta
    return d


class Policy:
    """Savings tables gamma(omega) per (node, own state) for one prospects class.

    Terminal nodes carry no table: their savings rate is identically zero.
    Evaluation interpolates monotonically in log wealth and clamps outside
    the tabulated range.
    """

    def __init__(self, class_id: int, grids: dict, gamma: dict, slopes: dict, *,
                 econ: TreeEconomy | None = None, tolerances: dict | None = None,
                 scenario_hash: str = "", interp: str = INTERP, n_states: int = 1):
        self.class_id = class_id
        self.grids = grids
        self.gamma = gamma
        # d gamma / d log(omega) at the grid points
        self.slopes = slopes
        self.econ = econ
        self.tolerances = dict(tolerances or {})
        self.scenario_hash = scenario_hash
        self.interp = interp
        self.n_states = n_states
        self._interp: dict = {}

    @property
    def tree(self) -> EventTree:
        return self.econ.tree

    @property
    def params(self) -> EconomyParams:
        return self.econ.params

    def default_state(self, node_id: int) -> int:
        if node_id == 0 and self.econ is not None:
            return self.tree.classes[self.class_id].initial_state
        return 0

    def is_terminal(self, node_id: int) -> bool:
        return node_id not in self.grids

    def _interpolant(self, node_id: int, state: int):
        key = (node_id, state)
        fn = self._interp.get(key)
        if fn is None:
            x = np.log(self.grids[node_id])
            y = self.gamma[key]
            fn = CubicHermiteSpline(x, y, monotone_slopes(x, y, self.slopes[key]),
                                    extrapolate=False)
            self._interp[key] = fn
        return fn

    def gamma_at(self, node_id: int, state: int | None, omega) -> np.ndarray:
        omega = np.asarray(omega, dtype=float)
        if self.is_terminal(node_id):
            return np.zeros_like(omega)
        if state is None:
            state = self.default_state(node_id)
        grid = self.grids[node_id]
        with np.errstate(divide="ignore"):
            x = np.log(np.clip(omega, grid[0], grid[-1]))
        return self._interpolant(node_id, state)(x)

    def savings_share(self, node_id: int, state: int | None, omega) -> np.ndarray:
        """Decision rule s = gamma omega / Omega (zero at terminal nodes)."""
        omega = np.asarray(omega, dtype=float)
        if self.is_terminal(node_id):
            return np.zeros_like(omega)
        return self.gamma_at(node_id, state, omega) * omega / self.econ.forecasts[node_id]

    def clamped(self, node_id: int, omega) -> np.ndarray:
        """Mask of wealth values outside the tabulated range."""
        omega = np.asarray(omega, dtype=float)
        if self.is_terminal(node_id):
            return np.zeros(omega.shape, dtype=bool)
        grid = self.grids[node_id]
        return (omega < grid[0]) | (omega > grid[-1])

    # serialization -----------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "format": POLICY_FORMAT,
            "class_id": self.class_id,
            "interp": self.interp,
            "n_states": self.n_states,
            "scenario_hash": self.scenario_hash,
            "tolerances": self.tolerances,
            "grids": {str(k): v.tolist() for k, v in sorted(self.grids.items())},
            "gamma": {f"{k[0]}:{k[1]}": v.tolist() for k, v in sorted(self.gamma.items())},
            "slopes": {f"{k[0]}:{k[1]}": v.tolist() for k, v in sorted(self.slopes.items())},
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, doc: dict, econ: TreeEconomy | None = None,
                  scenario_hash: str | None = None) -> "Policy":
        if doc.get("format") != POLICY_FORMAT:
            raise ConsistencyError(f"unsupported policy format {doc.get('format')!r}")
        if scenario_hash is not None and doc.get("scenario_hash") != scenario_hash:
            raise ConsistencyError("policy artifact belongs to a different scenario")
        grids = {int(k): np.array(v, dtype=float) for k, v in doc["grids"].items()}
        gamma, slopes = {}, {}
        for key, table in (("gamma", gamma), ("slopes", slopes)):
            for k, v in doc[key].items():
                node, state = k.split(":")
                table[(int(node), int(state))] = np.array(v, dtype=float)
        return cls(int(doc["class_id"]), grids, gamma, slopes, econ=econ,
                   tolerances=doc.get("tolerances"), scenario_hash=doc.get("scenario_hash", ""),
                   interp=doc.get("interp", INTERP), n_states=int(doc.get("n_states", 1)))

    @classmethod
    def from_json(cls, text: str, econ: TreeEconomy | None = None) -> "Policy":
        return cls.from_dict(json.loads(text), econ=econ)

    def save_npz(self, path) -> None:
        arrays = {f"grid_{k}": v for k, v in self.grids.items()}
        arrays.update({f"gamma_{k[0]}_{k[1]}": v for k, v in self.gamma.items()})
        arrays.update({f"slope_{k[0]}_{k[1]}": v for k, v in self.slopes.items()})
        meta = {k: v for k, v in self.to_dict().items() if k not in ("grids", "gamma")}
        np.savez(path, __meta__=np.array(json.dumps(meta)), **arrays)

    @classmethod
    def load_npz(cls, path, econ: TreeEconomy | None = None) -> "Policy":
        with np.load(path) as data:
            meta = json.loads(str(data["__meta__"]))
            grids, gamma, slopes = {}, {}, {}
            for name in data.files:
                if name.startswith("grid_"):
                    grids[int(name[5:])] = data[name].copy()
                elif name.startswith(("gamma_", "slope_")):
                    node, state = name[6:].split("_")
                    table = gamma if name[0] == "g" else slopes
                    table[(int(node), int(state))] = data[name].copy()
        return cls(int(meta["class_id"]), grids, gamma, slopes, econ=econ,
                   tolerances=meta.get("tolerances"), scenario_hash=meta.get("scenario_hash", ""),
                   interp=meta.get("interp", INTERP), n_states=int(meta.get("n_states", 1)))


@dataclass
class SolveReport:
    tolerance: float
    nodes: dict = field(default_factory=dict)

    @property
    def max_residual(self) -> float:
        return max((r["max_rel_residual"] for r in self.nodes.values()), default=0.0)

    @property
    def passed(self) -> bool:
        return self.max_residual <= self.tolerance and not any(
            r["boundary_low"] or r["boundary_high"] or not r["monotone"] for r in self.nodes.values())

    def to_dict(self) -> dict:
        return {"tolerance": self.tolerance, "passed": self.passed,
                "max_residual": self.max_residual,
                "nodes": {f"{k[0]}:{k[1]}": v for k, v in sorted(self.nodes.items())}}


# -- first-order condition ----------------------------------------------------

class _NodeFOC:
    """FOC pieces for one (node, own state), divided through by omega^(1-sigma)."""

    def __init__(self, policy: Policy, node_id: int, state: int):
        econ = policy.econ
        self.policy = policy
        self.params = econ.params
        self.node_id = node_id
        self.Omega = econ.forecasts[node_id]
        self.Y = econ.Y_eff[node_id]
        self.branches = node_branches(econ.tree, econ, policy.class_id, node_id, state)
        self.child_scale = {b.child: econ.Y_eff[b.child] ** (1.0 - self.params.sigma)
                            for b in self.branches}

    def lhs(self, gamma):
        sigma = self.params.sigma
        if sigma == 1.0:
            return 1.0 / (1.0 - gamma)
        return self.Y ** (1.0 - sigma) * (1.0 - gamma) ** (-sigma)

    def rhs(self, gamma, omega):
        p = self.params
        alpha, sigma = p.alpha, p.sigma
        base = alpha * gamma / self.Omega
        total = np.zeros(np.broadcast(gamma, omega).shape)
        with np.errstate(divide="ignore", invalid="ignore"):
            for b in self.branches:
                q = base if b.e_eff == 0.0 else base + (1.0 - alpha) * b.e_eff / omega
                g_next = self.policy.gamma_at(b.child, b.next_state, q * omega)
                share = q * (1.0 - g_next)
                if sigma == 1.0:
                    total = total + b.prob / share
                else:
                    total = total + b.prob * self.child_scale[b.child] * share ** (-sigma)
        return p.beta * alpha / self.Omega * total

    def next_wealth(self, gamma, omega):
        alpha = self.params.alpha
        return [(b, alpha * omega * gamma / self.Omega + (1.0 - alpha) * b.e_eff)
                for b in self.branches]


def foc_residual(policy: Policy, node_id: int, omega, gamma, state: int | None = None):
    """LHS minus RHS of the first-order condition in the savings rate.

    LHS = Y^(1-sigma) omega^(1-sigma) / (1-gamma)^sigma and
    RHS = (beta alpha omega / Omega) E V'_{h-1}(alpha omega gamma / Omega + (1-alpha) e).
    Strictly increasing in gamma.  Returns -inf where a positive-probability
    branch leaves zero next-period consumption, +inf at gamma >= 1.
    """
    if policy.is_terminal(node_id):
        raise DomainError("terminal nodes have no first-order condition")
    if state is None:
        state = policy.default_state(node_id)
    omega = np.asarray(omega, dtype=float)
    gamma = np.asarray(gamma, dtype=float)
    if np.any(omega <= 0.0):
        raise DomainError("omega must be positive")
    foc = _NodeFOC(policy, node_id, state)
    scale = omega ** (1.0 - policy.params.sigma)
    safe = np.where(gamma >= 1.0, 0.5, np.clip(gamma, 0.0, None))
    with np.errstate(divide="ignore", invalid="ignore"):
        lhs = scale * foc.lhs(safe)
        rhs = scale * foc.rhs(safe, omega)
        r = np.where(np.isinf(rhs) | np.isnan(rhs), -np.inf, lhs - rhs)
    r = np.where(gamma >= 1.0, np.inf, r)
    return r if r.ndim else float(r)


def _bisect(foc: _NodeFOC, omega: np.ndarray, iters: int) -> np.ndarray:
    lo = np.zeros_like(omega)
    hi = np.ones_like(omega)
    with np.errstate(divide="ignore", invalid="ignore"):
        for _ in range(iters):
            mid = 0.5 * (lo + hi)
            r = foc.lhs(mid) - foc.rhs(mid, omega)
            below = ~(r >= 0.0)  # NaN or -inf both mean "raise gamma"
            lo = np.where(below, mid, lo)
            hi = np.where(below, hi, mid)
    return 0.5 * (lo + hi)


def solve_gamma_at(policy: Policy, node_id: int, omega, state: int | None = None,
                   iters: int | None = None) -> np.ndarray:
    """Solve the node's first-order condition directly at arbitrary wealth."""
    if policy.is_terminal(node_id):
        return np.zeros_like(np.asarray(omega, dtype=float))
    if state is None:
        state = policy.default_state(node_id)
    omega = np.atleast_1d(np.asarray(omega, dtype=float))
    iters = iters or policy.tolerances.get("bisect_iters", 50)
    return _bisect(_NodeFOC(policy, node_id, state), omega, iters)


# -- grids --------------------------------------------------------------------

def _make_grid(floor: float, ceil: float, opts: SolverOptions, refine: list[float]) -> np.ndarray:
    main = np.geomspace(opts.omega_min, ceil, opts.n_grid)
    parts = [main]
    if floor < opts.omega_min:
        k = int(math.ceil(10 * math.log10(opts.omega_min / floor))) + 1
        parts.append(np.geomspace(floor, opts.omega_min, k))
    for x in refine:
        a, b = max(0.5 * x, floor), min(2.0 * x, ceil)
        if b > a and opts.n_refine > 0:
            parts.append(np.linspace(a, b, opts.n_refine))
    grid = np.unique(np.concatenate(parts))
    keep = np.concatenate([[True], np.diff(grid) > 1e-9 * grid[1:]])
    return grid[keep]


def _grid_ranges(tree, econ, class_id, opts, upper, lower, omega_hi):
    n_states = len(tree.classes[class_id].states)
    floors = {0: opts.omega_min}
    ceils = {0: max(1.0, omega_hi)}
    refine: dict[int, list[float]] = {}
    alpha = econ.params.alpha
    for node in sorted(tree.nodes, key=lambda n: n.t):
        if node.terminal:
            continue
        Omega = econ.forecasts[node.id]
        g_hi = min(1.0, upper[node.id] + 0.05)
        refine[node.id] = []
        for k in range(n_states):
            for b in node_branches(tree, econ, class_id, node.id, k):
                if b.e_eff == 0.0:
                    g_lo = 0.5 * lower[(node.id, k)]
                    lo = alpha * floors[node.id] * g_lo / Omega if g_lo > 0 else opts.omega_min
                else:
                    lo = (1.0 - alpha) * b.e_eff
                    refine[node.id].append(lo * Omega / (alpha * max(upper[node.id], 1e-3)))
                hi = alpha * ceils[node.id] * g_hi / Omega + (1.0 - alpha) * b.e_eff
                floors[b.child] = min(floors.get(b.child, opts.omega_min), lo)
                ceils[b.child] = max(ceils.get(b.child, 0.0), hi)
    return floors, ceils, refine


# -- backward induction -------------------------------------------------------

def solve_policy(tree: EventTree, params: EconomyParams, forecasts: Forecasts, class_id: int = 0,
                 options: SolverOptions | None = None, *, effective: bool = True,
                 omega_hi: float = 1.0, scenario_hash: str = "",
                 econ: TreeEconomy | None = None) -> tuple[Policy, SolveReport]:
    """Tabulate the savings function at every non-terminal node, leaves first."""
    opts = options or SolverOptions()
    econ = econ or TreeEconomy(tree, params, forecasts, effective=effective)
    upper = gamma_upper_bound(tree, forecasts, params, econ)
    lower, _ = gamma_lower_bound(tree, forecasts, params, class_id, econ)
    floors, ceils, refine = _grid_ranges(tree, econ, class_id, opts, upper, lower, omega_hi)
    n_states = len(tree.classes[class_id].states)
    grids = {n.id: _make_grid(floors[n.id], ceils[n.id], opts, refine[n.id])
             for n in tree.nonterminal()}
    tables: dict[tuple[int, int], np.ndarray] = {}
    slopes: dict[tuple[int, int], np.ndarray] = {}
    policy = Policy(class_id, grids, tables, slopes, econ=econ, scenario_hash=scenario_hash,
                    tolerances={"bisect_iters": opts.bisect_iters, "foc_tol": opts.foc_tol,
                                "n_grid": opts.n_grid, "omega_min": opts.omega_min},
                    n_states=n_states)
    report = SolveReport(tolerance=opts.foc_tol)
    for node in tree.bottom_up():
        if node.terminal:
            continue
        grid = grids[node.id]
        for k in range(n_states):
            foc = _NodeFOC(policy, node.id, k)
            m = grid.size
            # table points and the two slope probes in one vectorized pass
            probes = np.concatenate([grid, grid * math.exp(SLOPE_STEP), grid * math.exp(-SLOPE_STEP)])
            g, up, down = np.split(_bisect(foc, probes, opts.bisect_iters), [m, 2 * m])
            report.nodes[(node.id, k)] = _node_report(policy, foc, grid, g)
            drops = np.diff(g)
            worst = float(-drops.min()) if drops.size and drops.min() < 0 else 0.0
            if 0.0 < worst <= MONOTONE_NOISE:
                g = np.maximum.accumulate(g)
            report.nodes[(node.id, k)]["projected_drop"] = worst
            report.nodes[(node.id, k)]["monotone"] = worst <= MONOTONE_NOISE
            slopes[(node.id, k)] = (up - down) / (2.0 * SLOPE_STEP)
            tables[(node.id, k)] = g
    return policy, report


def _node_report(policy, foc, grid, g) -> dict:
    with np.errstate(divide="ignore", invalid="ignore"):
        lhs = foc.lhs(g)
        rhs = foc.rhs(g, grid)
        rel = np.abs(lhs - rhs) / np.abs(lhs)
        r_lo = foc.lhs(1e-12) - foc.rhs(np.full_like(grid, 1e-12), grid)
        r_hi = foc.lhs(1.0 - 1e-12) - foc.rhs(np.full_like(grid, 1.0 - 1e-12), grid)
    clamped = 0
    for b, y in foc.next_wealth(g, grid):
        clamped += int(policy.clamped(b.child, y).sum())
    return {
        "grid_size": int(grid.size),
        "bisect_iters": int(policy.tolerances["bisect_iters"]),
        "max_rel_residual": float(np.nanmax(rel)),
        "boundary_low": int(np.sum(r_lo >= 0.0)),
        "boundary_high": int(np.sum(r_hi < 0.0)),
        "clamped_next": clamped,
    }


# -- value function -----------------------------------------------------------

def _value(policy: Policy, node_id: int, state: int, omega: np.ndarray) -> np.ndarray:
    econ, p = policy.econ, policy.params
    g = policy.gamma_at(node_id, state, omega)
    v = utility((1.0 - g) * omega * econ.Y_eff[node_id], p.sigma)
    node = econ.tree.nodes[node_id]
    if node.terminal:
        return v
    for b in node_branches(econ.tree, econ, policy.class_id, node_id, state):
        y = wealth_transition(g * omega / econ.forecasts[node_id], b.e_eff, p.alpha)
        v = v + p.beta * b.prob * _value(policy, b.child, b.next_state, y)
    return v


def value_and_derivative(policy: Policy, node_id: int, omega, state: int | None = None):
    """Value by forward substitution of the policy, and V' by the envelope identity."""
    omega = np.asarray(omega, dtype=float)
    if np.any(omega <= 0.0):
        raise DomainError("value function is -inf at omega <= 0")
    if state is None:
        state = policy.default_state(node_id)
    p = policy.params
    V = _value(policy, node_id, state, omega)
    g = policy.gamma_at(node_id, state, omega)
    cshare = omega * (1.0 - g)
    if p.sigma == 1.0:
        Vp = 1.0 / cshare
    else:
        Vp = policy.econ.Y_eff[node_id] ** (1.0 - p.sigma) * cshare ** (-p.sigma)
    return V, Vp
