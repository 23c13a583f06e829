"""Brute-force reference solutions on tiny trees.

Nothing here touches the first-order condition or the solver's tables: the
oracle maximizes discounted expected utility directly, nesting a dense scan
over the savings rate with golden-section refinement at every non-terminal
node, finished by parabolic interpolation steps.  Aggregates along the tree
are recomputed locally for the same reason.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import sympy as sp

from .econ import Forecasts
from .errors import ConsistencyError, ValidationError
from .params import EconomyParams
from .shocks import EventTree

GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0
CHUNK = 20_000
POLISH_STEPS = (1e-4, 1e-5)


@dataclass(frozen=True)
class OracleSpec:
    tree: EventTree
    n_scan: int = 201
    golden_tol: float = 1e-10
    class_id: int = 0
    scenario_hash: str = ""

    def __post_init__(self):
        if self.tree.T > 3:
            raise ValidationError("oracle instances are limited to T <= 3")
        for n in self.tree.nodes:
            if len(n.children) > 4:
                raise ValidationError("oracle instances allow at most 4 children per node")
        for cls in self.tree.classes:
            for dists in cls.transitions.values():
                if any(len(d.values) > 3 for d in dists):
                    raise ValidationError("oracle instances allow at most 3 employment points")


def _aggregates(tree: EventTree, params: EconomyParams, forecasts: Forecasts):
    n = len(tree.nodes)
    goods = np.empty(n)
    scale = np.ones(n)
    goods[0] = params.Y1
    for node in sorted(tree.nodes, key=lambda x: x.t):
        if not node.children:
            continue
        capital = forecasts[node.id] * goods[node.id]
        for c in node.children:
            y = tree.nodes[c].z * capital**params.alpha * params.L_norm ** (1.0 - params.alpha)
            goods[c] = y + (1.0 - params.delta) * capital / params.alpha
            scale[c] = y / goods[c]
    return goods, scale


class _BruteForce:
    def __init__(self, spec: OracleSpec, params: EconomyParams, forecasts: Forecasts):
        self.spec, self.params, self.forecasts = spec, params, forecasts
        self.tree = spec.tree
        self.goods, self.scale = _aggregates(self.tree, params, forecasts)
        n = spec.n_scan
        self.scan = np.arange(1, n + 1) / (n + 1.0)

    def u(self, c):
        with np.errstate(divide="ignore", invalid="ignore"):
            if self.params.sigma == 1.0:
                out = np.log(c)
            else:
                out = (c ** (1.0 - self.params.sigma) - 1.0) / (1.0 - self.params.sigma)
        return np.where(c > 0.0, out, -np.inf)

    def outcomes(self, node_id: int, state: int):
        node = self.tree.nodes[node_id]
        for c, p in zip(node.children, node.probs):
            d = self.tree.dist(self.spec.class_id, c, state)
            for e, pe, ns in zip(d.values, d.probs, d.next_states):
                if p * pe > 0.0:
                    yield p * pe, c, e * self.scale[c], ns

    def objective(self, node_id: int, state: int, omega, gamma):
        """Discounted expected utility of saving ``gamma`` (broadcast shapes)."""
        p = self.params
        total = self.u((1.0 - gamma) * omega * self.goods[node_id])
        Omega = self.forecasts[node_id]
        for prob, child, e, ns in self.outcomes(node_id, state):
            nxt = p.alpha * omega * gamma / Omega + (1.0 - p.alpha) * e
            total = total + p.beta * prob * self.value(child, ns, nxt)
        return np.where(np.isfinite(total), total, -np.inf)

    def value(self, node_id: int, state: int, omega) -> np.ndarray:
        omega = np.asarray(omega, dtype=float)
        if not self.tree.nodes[node_id].children:
            return self.u(omega * self.goods[node_id])
        flat = omega.ravel()
        out = np.empty_like(flat)
        for start in range(0, flat.size, CHUNK):
            part = flat[start:start + CHUNK]
            out[start:start + CHUNK] = self.maximize(node_id, state, part)[1]
        return out.reshape(omega.shape)

    def maximize(self, node_id: int, state: int, omega: np.ndarray):
        omega = np.asarray(omega, dtype=float)
        if not self.tree.nodes[node_id].children:
            return np.zeros_like(omega), self.u(omega * self.goods[node_id])
        grid = self.scan
        vals = self.objective(node_id, state, omega[:, None], grid[None, :])
        best = np.argmax(vals, axis=1)
        step = grid[1] - grid[0]
        a = np.clip(grid[best] - step, 0.0, 1.0)
        b = np.clip(grid[best] + step, 0.0, 1.0)
        x1 = b - GOLDEN * (b - a)
        x2 = a + GOLDEN * (b - a)
        f1 = self.objective(node_id, state, omega, x1)
        f2 = self.objective(node_id, state, omega, x2)
        while np.max(b - a) > self.spec.golden_tol:
            left = f1 >= f2
            b = np.where(left, x2, b)
            a = np.where(left, a, x1)
            new_x1 = np.where(left, b - GOLDEN * (b - a), x2)
            new_x2 = np.where(left, x1, a + GOLDEN * (b - a))
            new_f1 = np.where(left, np.nan, f2)
            new_f2 = np.where(left, f1, np.nan)
            probe = np.where(left, new_x1, new_x2)
            fp = self.objective(node_id, state, omega, probe)
            x1, x2 = new_x1, new_x2
            f1 = np.where(left, fp, new_f1)
            f2 = np.where(left, new_f2, fp)
        gamma = 0.5 * (a + b)
        for h in POLISH_STEPS:
            gamma = self.polish(node_id, state, omega, gamma, h)
        return gamma, self.objective(node_id, state, omega, gamma)

    def polish(self, node_id, state, omega, gamma, h):
        # value comparisons alone stall near sqrt(machine eps); a three-point
        # parabolic vertex (Brent's interpolation step) recovers the rest
        f0 = self.objective(node_id, state, omega, gamma)
        fp = self.objective(node_id, state, omega, gamma + h)
        fm = self.objective(node_id, state, omega, gamma - h)
        den = fp - 2.0 * f0 + fm
        with np.errstate(divide="ignore", invalid="ignore"):
            step = -h * (fp - fm) / (2.0 * den)
        ok = ((gamma - h > 0.0) & (gamma + h < 1.0) & (den < 0.0) & np.isfinite(step)
              & (np.abs(step) <= h))
        return np.where(ok, gamma + np.where(ok, step, 0.0), gamma)


def brute_force_gamma(spec: OracleSpec, params: EconomyParams, forecasts: Forecasts, omega,
                      node_id: int = 0, state: int | None = None) -> np.ndarray:
    """Savings rate maximizing expected discounted utility, by exhaustive search."""
    if state is None:
        state = spec.tree.classes[spec.class_id].initial_state if node_id == 0 else 0
    omega = np.atleast_1d(np.asarray(omega, dtype=float))
    return _BruteForce(spec, params, forecasts).maximize(node_id, state, omega)[0]


def oracle_objective(spec: OracleSpec, params: EconomyParams, forecasts: Forecasts, omega,
                     gamma, node_id: int = 0, state: int | None = None) -> np.ndarray:
    """Expected discounted utility of saving ``gamma`` now and optimally afterwards."""
    if state is None:
        state = spec.tree.classes[spec.class_id].initial_state if node_id == 0 else 0
    bf = _BruteForce(spec, params, forecasts)
    return bf.objective(node_id, state, np.asarray(omega, dtype=float),
                        np.asarray(gamma, dtype=float))


def compare_policy(policy, spec: OracleSpec, omegas, params: EconomyParams | None = None,
                   forecasts: Forecasts | None = None, node_id: int = 0) -> float:
    """Largest |gamma_policy - gamma_oracle| over the probe wealths."""
    if spec.scenario_hash and policy.scenario_hash and spec.scenario_hash != policy.scenario_hash:
        raise ConsistencyError("policy and oracle describe different scenarios")
    if policy.class_id != spec.class_id:
        raise ConsistencyError("policy and oracle refer to different prospects classes")
    params = params or policy.params
    forecasts = forecasts or policy.econ.forecasts
    omegas = np.asarray(omegas, dtype=float)
    state = spec.tree.classes[spec.class_id].initial_state if node_id == 0 else 0
    ref = brute_force_gamma(spec, params, forecasts, omegas, node_id, state)
    got = policy.gamma_at(node_id, state, omegas)
    return float(np.max(np.abs(got - ref)))


def implicit_gamma_derivative_t2(params: EconomyParams, forecasts: Forecasts, tree: EventTree,
                                 omega: float, class_id: int = 0, digits: int = 30):
    """d gamma / d omega for a two-period problem by symbolic implicit differentiation.

    Builds the first-order condition symbolically, solves it with
    high-precision Newton iteration and returns ``(gamma, dgamma/domega)``.
    """
    if tree.T != 2:
        raise ValidationError("closed-form derivative is for T = 2 only")
    goods, scale = _aggregates(tree, params, forecasts)
    g, w = sp.symbols("gamma omega", positive=True)
    a = sp.nsimplify(params.alpha)
    b = sp.nsimplify(params.beta)
    s = sp.nsimplify(params.sigma)
    Omega = sp.Float(forecasts[0], digits)
    Y1 = sp.Float(goods[0], digits)
    rhs = 0
    root = tree.root
    state = tree.classes[class_id].initial_state
    for c, p in zip(root.children, root.probs):
        d = tree.dist(class_id, c, state)
        for e, pe in zip(d.values, d.probs):
            y = a * w * g / Omega + (1 - a) * sp.Float(e * scale[c], digits)
            rhs += sp.Float(p * pe, digits) * sp.Float(goods[c], digits) ** (1 - s) * y ** (-s)
    F = Y1 ** (1 - s) * w ** (1 - s) * (1 - g) ** (-s) - b * a * w / Omega * rhs
    F_w = sp.diff(F, w)
    F_g = sp.diff(F, g)
    F_at = F.subs(w, sp.Float(omega, digits))
    # bracket in (0, 1): F is increasing in gamma
    lo, hi = sp.Float("1e-25", digits), 1 - sp.Float("1e-25", digits)
    for _ in range(200):
        mid = (lo + hi) / 2
        if F_at.subs(g, mid).evalf(digits) < 0:
            lo = mid
        else:
            hi = mid
    gamma_star = sp.nsolve(F_at, g, (lo + hi) / 2, prec=digits)
    point = {g: gamma_star, w: sp.Float(omega, digits)}
    deriv = -F_w.subs(point).evalf(digits) / F_g.subs(point).evalf(digits)
    return float(gamma_star), float(deriv)
