"""Market-clearing forecasts: choose Omega so agents' investment shares sum to one.

Residuals at a node are expectations over the agents' own employment
histories along the aggregate path leading to that node.  Agents that share
(class, own state, wealth) are pooled, so exact enumeration stays cheap for
symmetric populations; past ``enumeration_cap`` pooled points the expectation
is estimated from sampled histories with common random numbers.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .econ import Forecasts, TreeEconomy
from .errors import ConsistencyError
from .params import AuctioneerOptions, EconomyParams, SolverOptions
from .population import PopulationState
from .shocks import EventTree
from .solver import Policy, gamma_upper_bound, solve_policy

MAX_STEP = 2.0
MIN_DAMPING = 1.0 / 64.0

__all__ = ["Forecasts", "ClearingReport", "NodeResiduals", "clearing_residual",
           "clearing_residuals", "initial_forecasts", "solve_policies", "solve_forecasts"]


def clearing_residual(shares) -> float:
    """Sum of investment shares minus one."""
    return float(np.sum(shares) - 1.0)


@dataclass(frozen=True)
class NodeResiduals:
    values: dict
    std_errors: dict
    clamped: dict
    mode: str

    @property
    def max_abs(self) -> float:
        return max((abs(v) for v in self.values.values()), default=0.0)


@dataclass(frozen=True)
class ClearingReport:
    residuals: dict
    iterations: int
    converged: bool
    damping: float
    tolerance: float
    history: tuple
    std_errors: dict = field(default_factory=dict)
    mode: str = "enumerated"
    projections: int = 0
    clamped: dict = field(default_factory=dict)
    message: str = ""
    policies: tuple = field(default=(), compare=False, repr=False)

    @property
    def max_residual(self) -> float:
        return max((abs(v) for v in self.residuals.values()), default=0.0)

    def to_dict(self) -> dict:
        return {
            "converged": self.converged,
            "iterations": self.iterations,
            "damping": self.damping,
            "tolerance": self.tolerance,
            "max_residual": self.max_residual,
            "mode": self.mode,
            "projections": self.projections,
            "message": self.message,
            "residuals": {str(k): v for k, v in sorted(self.residuals.items())},
            "std_errors": {str(k): v for k, v in sorted(self.std_errors.items())},
            "clamped": {str(k): v for k, v in sorted(self.clamped.items())},
            "history": list(self.history),
        }


def solve_policies(tree: EventTree, params: EconomyParams, forecasts: Forecasts,
                   population: PopulationState, options: SolverOptions | None = None,
                   effective: bool = True, scenario_hash: str = "") -> tuple:
    """One policy per class (None for classes with no members)."""
    econ = TreeEconomy(tree, params, forecasts, effective=effective)
    hi = max(1.0, float(population.omega.max(initial=0.0)))
    out = []
    for ci in range(len(tree.classes)):
        if not np.any(population.classes == ci):
            out.append(None)
            continue
        pol, _ = solve_policy(tree, params, forecasts, ci, options, effective=effective,
                              omega_hi=hi, scenario_hash=scenario_hash, econ=econ)
        out.append(pol)
    return tuple(out)


def _shares(policies, node_id, cls, st, om):
    s = np.empty_like(om)
    clamped = 0
    for key in set(zip(cls.tolist(), st.tolist())):
        mask = (cls == key[0]) & (st == key[1])
        pol: Policy = policies[key[0]]
        s[mask] = pol.savings_share(node_id, key[1], om[mask])
        clamped += int(np.count_nonzero(pol.clamped(node_id, om[mask])))
    return s, clamped


def _outcomes(tree, child, cls, st):
    """Per pooled point: list of (prob, e, next_state) arrays, padded to a common width."""
    width = max(len(tree.dist(c, child, s).values) for c, s in set(zip(cls.tolist(), st.tolist())))
    P = np.zeros((cls.size, width))
    E = np.zeros((cls.size, width))
    S = np.zeros((cls.size, width), dtype=int)
    for key in set(zip(cls.tolist(), st.tolist())):
        d = tree.dist(key[0], child, key[1])
        mask = (cls == key[0]) & (st == key[1])
        k = len(d.values)
        P[mask, :k] = d.probs
        E[mask, :k] = d.values
        S[mask, :k] = d.next_states
    return P, E, S


def _pool(cls, st, om, w):
    order = np.lexsort((om, st, cls))
    cls, st, om, w = cls[order], st[order], om[order], w[order]
    new = np.ones(cls.size, dtype=bool)
    new[1:] = (cls[1:] != cls[:-1]) | (st[1:] != st[:-1]) | (om[1:] != om[:-1])
    idx = np.cumsum(new) - 1
    return cls[new], st[new], om[new], np.bincount(idx, weights=w)


def _support_bound(tree: EventTree, population: PopulationState) -> float:
    widths = [len(d.values) for c in tree.classes for ds in c.transitions.values() for d in ds]
    k = max(widths, default=1)
    groups = len(_pool(population.classes, population.states, population.omega,
                       np.ones(population.N))[0])
    return float(groups) * float(k) ** (tree.T - 1)


def _enumerate(tree, econ, policies, population, alpha):
    values, clamped = {}, {}
    stack = [(0, *_pool(population.classes, population.states, population.omega,
                        np.ones(population.N)))]
    while stack:
        node_id, cls, st, om, w = stack.pop()
        node = tree.nodes[node_id]
        if not node.children:
            continue
        s, nclamp = _shares(policies, node_id, cls, st, om)
        values[node_id] = float(np.dot(w, s) - 1.0)
        clamped[node_id] = nclamp
        for child in node.children:
            P, E, S = _outcomes(tree, child, cls, st)
            keep = P > 0.0
            rows = np.nonzero(keep)[0]
            nxt = alpha * s[rows] + (1.0 - alpha) * E[keep] * econ.wage_scale[child]
            stack.append((child, *_pool(cls[rows], S[keep], nxt, w[rows] * P[keep])))
    return NodeResiduals(values, {k: 0.0 for k in values}, clamped, "enumerated")


def _sample(tree, econ, policies, population, alpha, n_samples, seed):
    values, errors, clamped = {}, {}, {}
    R, N = n_samples, population.N
    cls = np.broadcast_to(population.classes, (R, N)).ravel()
    stack = [(0, np.broadcast_to(population.states, (R, N)).ravel().copy(),
              np.broadcast_to(population.omega, (R, N)).ravel().copy())]
    while stack:
        node_id, st, om = stack.pop()
        node = tree.nodes[node_id]
        if not node.children:
            continue
        s, nclamp = _shares(policies, node_id, cls, st, om)
        totals = s.reshape(R, N).sum(axis=1)
        values[node_id] = float(totals.mean() - 1.0)
        errors[node_id] = float(totals.std(ddof=1) / np.sqrt(R)) if R > 1 else float("nan")
        clamped[node_id] = nclamp
        for child in node.children:
            # common random numbers: the stream depends only on (seed, child)
            draws = np.random.default_rng([seed, child]).random(cls.size)
            P, E, S = _outcomes(tree, child, cls, st)
            k = (draws[:, None] >= np.cumsum(P, axis=1)).sum(axis=1)
            k = np.minimum(k, P.shape[1] - 1)
            rows = np.arange(cls.size)
            nxt = alpha * s + (1.0 - alpha) * E[rows, k] * econ.wage_scale[child]
            stack.append((child, S[rows, k], nxt))
    return NodeResiduals(values, errors, clamped, "sampled")


def clearing_residuals(forecasts: Forecasts, tree: EventTree, params: EconomyParams,
                       population: PopulationState, policies: tuple | None = None,
                       opts: AuctioneerOptions | None = None,
                       solver_options: SolverOptions | None = None,
                       effective: bool = True) -> NodeResiduals:
    """Expected sum of investment shares minus one, at every non-terminal node."""
    opts = opts or AuctioneerOptions()
    if population.node_id != 0:
        raise ConsistencyError("clearing starts from a root population")
    if policies is None:
        policies = solve_policies(tree, params, forecasts, population, solver_options, effective)
    econ = TreeEconomy(tree, params, forecasts, effective=effective)
    if _support_bound(tree, population) <= opts.enumeration_cap:
        return _enumerate(tree, econ, policies, population, params.alpha)
    return _sample(tree, econ, policies, population, params.alpha, opts.n_samples, opts.seed)


def _factor(demand: float, step: float) -> float:
    # corner solutions can drive aggregate demand to zero; cap each move at a factor MAX_STEP
    return min(max(demand**step, 1.0 / MAX_STEP), MAX_STEP)


def initial_forecasts(tree: EventTree, params: EconomyParams, passes: int = 8) -> Forecasts:
    """Start from the no-employment upper savings bound, iterated to self-consistency."""
    omega = Forecasts.constant(tree, 0.5)
    for _ in range(passes):
        bound = gamma_upper_bound(tree, omega, params)
        omega = Forecasts.from_mapping(tree, {k: min(max(v, 1e-6), 1.0 - 1e-6)
                                              for k, v in bound.items()})
    return omega


def solve_forecasts(tree: EventTree, params: EconomyParams, population: PopulationState,
                    opts: AuctioneerOptions | None = None,
                    solver_options: SolverOptions | None = None,
                    initial: Forecasts | None = None, effective: bool = True,
                    scenario_hash: str = "", max_projections: int = 20):
    """Damped multiplicative iteration Omega <- Omega (sum s)^damping.

    The damping is halved whenever the largest residual grows; the value in
    force at exit is reported.  Non-convergence is reported, never raised.
    """
    opts = opts or AuctioneerOptions()
    omega = initial if initial is not None else initial_forecasts(tree, params)
    omega.check(tree)
    lam = opts.damping
    history: list[float] = []
    projections = 0
    streak = 0
    message = ""
    res = policies = None
    converged = False
    it = 0
    for it in range(1, opts.max_iters + 1):
        policies = solve_policies(tree, params, omega, population, solver_options, effective,
                                  scenario_hash)
        res = clearing_residuals(omega, tree, params, population, policies, opts, effective=effective)
        if history and res.max_abs > history[-1] and lam > MIN_DAMPING:
            # overshooting: the update is locally unstable at this damping
            lam = max(0.5 * lam, MIN_DAMPING)
        history.append(res.max_abs)
        if res.max_abs <= opts.clearing_tol:
            converged = True
            break
        if it == opts.max_iters:
            message = "iteration cap reached"
            break
        new = omega.as_array().copy()
        projected = False
        for node_id, r in res.values.items():
            base = new[node_id]
            step = lam
            demand = max(1.0 + r, 1e-12)
            cand = base * _factor(demand, step)
            while not 0.0 < cand < 1.0:
                projected = True
                step *= 0.5
                cand = base * _factor(demand, step)
            new[node_id] = cand
        projections += int(projected)
        streak = streak + 1 if projected else 0
        if streak > max_projections:
            message = "forecasts repeatedly projected back into (0, 1)"
            break
        omega = Forecasts(tuple(float(x) for x in new))
    report = ClearingReport(
        residuals=dict(res.values), iterations=it, converged=converged, damping=lam,
        tolerance=opts.clearing_tol, history=tuple(history), std_errors=dict(res.std_errors),
        mode=res.mode, projections=projections, clamped=dict(res.clamped), message=message,
        policies=policies,
    )
    return omega, report
