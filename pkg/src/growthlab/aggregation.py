"""Savings-rate binning, aggregation error, total variation and derivative checks."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from .errors import ConsistencyError, DomainError
from .population import PopulationState
from .solver import Policy, value_and_derivative

BIN_CONSTANT = 4.0


@dataclass(frozen=True)
class Bin:
    class_id: int
    lo: float
    hi: float
    rate: float
    members: np.ndarray
    wealth: float
    anchor: float = 0.0


@dataclass(frozen=True)
class Binning:
    bins: tuple
    epsilon: float
    node_id: int
    n_agents: int
    n_classes: int
    Y: float
    constant: float = BIN_CONSTANT

    @property
    def M(self) -> int:
        return len(self.bins)

    @property
    def occupied(self) -> int:
        return sum(1 for b in self.bins if b.members.size)

    @property
    def count_ratio(self) -> float:
        """M eps / s; bounded by ``constant`` when the count estimate holds."""
        return self.M * self.epsilon / self.n_classes

    def assignment(self) -> np.ndarray:
        out = np.full(self.n_agents, -1)
        for k, b in enumerate(self.bins):
            out[b.members] = k
        return out


def _state_of(pop: PopulationState, class_id: int) -> int:
    states = np.unique(pop.states[pop.classes == class_id])
    if states.size > 1:
        raise ConsistencyError(f"class {class_id} mixes own states; bin per (class, state)")
    return int(states[0]) if states.size else 0


def sweep(policy: Policy, node_id: int, state: int, epsilon: float, upper: float = 1.0,
          wealth=None) -> tuple[np.ndarray, np.ndarray]:
    """Interval left ends and rate anchors for a greedy sweep in gamma.

    Each bin's rate is read at its anchor, the poorest member (or the left
    end when ``wealth`` is omitted); the next interval starts where gamma
    first exceeds the anchor's rate by ``eps``.
    """
    if epsilon <= 0.0:
        raise DomainError("epsilon must be positive")
    w = None if wealth is None else np.sort(np.asarray(wealth, dtype=float))
    if policy.is_terminal(node_id):
        return np.array([0.0]), np.array([w[0] if w is not None and w.size else 0.0])
    grid = policy.grids[node_id]
    hi = min(upper, grid[-1])
    g_top = float(policy.gamma_at(node_id, state, hi))

    def gamma(x):
        return float(policy.gamma_at(node_id, state, x))

    cuts = [0.0]
    anchor = float(w[0]) if w is not None and w.size else float(grid[0])
    anchors = [anchor]
    level = gamma(anchor) + epsilon
    while epsilon < 1.0 and level <= g_top:
        # gamma is monotone, so the crossing is bracketed in log wealth
        a = math.log(max(anchor, grid[0]))
        x = math.exp(brentq(lambda lx: gamma(math.exp(lx)) - level, a, math.log(hi),
                            xtol=1e-14, rtol=1e-14))
        # step just past the crossing so the bin to its left stays within eps
        while gamma(x) < level:
            x = np.nextafter(x, np.inf)
        if x >= upper:
            break
        cuts.append(float(x))
        if w is not None:
            k = int(np.searchsorted(w, x, side="left"))
            anchor = float(w[k]) if k < w.size and w[k] < upper else float(x)
        else:
            anchor = float(x)
        anchors.append(anchor)
        level = gamma(anchor) + epsilon
    return np.array(cuts), np.array(anchors)


def cut_points(policy: Policy, node_id: int, state: int, epsilon: float,
               upper: float = 1.0) -> np.ndarray:
    """Left endpoints a_0 = 0 < a_1 < ... with gamma(a_{m+1}) = gamma(a_m) + eps."""
    return sweep(policy, node_id, state, epsilon, upper)[0]


def bin_agents(pop: PopulationState, policies, epsilon: float, Y: float = 1.0,
               upper: float | None = None) -> Binning:
    """Partition agents by class and by intervals of nearly constant savings rate."""
    if epsilon <= 0.0:
        raise DomainError("epsilon must be positive")
    node_id = pop.node_id
    top = max(1.0, float(pop.omega.max(initial=0.0))) if upper is None else upper
    bins = []
    n_classes = 0
    for ci, pol in enumerate(policies):
        idx = pop.members(ci)
        if pol is None or idx.size == 0:
            continue
        n_classes += 1
        state = _state_of(pop, ci)
        cuts, anchors = sweep(pol, node_id, state, epsilon, top, pop.omega[idx])
        edges = np.append(cuts, np.inf)
        where = np.searchsorted(cuts, pop.omega[idx], side="right") - 1
        if pol.is_terminal(node_id):
            rates = np.zeros_like(anchors)
        else:
            rates = pol.gamma_at(node_id, state, anchors)
        for m in range(cuts.size):
            members = idx[where == m]
            hi = float(edges[m + 1]) if m + 1 < cuts.size else top
            bins.append(Bin(ci, float(cuts[m]), hi, float(rates[m]), members,
                            float(pop.omega[members].sum() * Y), float(anchors[m])))
    return Binning(tuple(bins), epsilon, node_id, pop.N, max(n_classes, 1), Y)


def exact_aggregate(pop: PopulationState, policies, Y: float = 1.0) -> float:
    """Sum_j gamma(omega_j) omega_j Y."""
    total = 0.0
    for ci, pol in enumerate(policies):
        idx = pop.members(ci)
        if pol is None or idx.size == 0:
            continue
        state = _state_of(pop, ci)
        om = pop.omega[idx]
        total += float(np.dot(pol.gamma_at(pop.node_id, state, om), om)) * Y
    return total


def binned_aggregate(binning: Binning) -> float:
    return float(sum(b.rate * b.wealth for b in binning.bins))


def aggregation_error(binning: Binning, pop: PopulationState, policies, Y: float = 1.0) -> float:
    """|exact aggregate investment - binned estimate|."""
    if binning.n_agents != pop.N or binning.node_id != pop.node_id:
        raise ConsistencyError("binning was built from a different population")
    assigned = binning.assignment()
    if np.any(assigned < 0) or sum(b.members.size for b in binning.bins) != pop.N:
        raise ConsistencyError("binning does not cover every agent exactly once")
    for b in binning.bins:
        if b.members.size and abs(pop.omega[b.members].sum() * Y - b.wealth) > 1e-12 * max(1.0, Y):
            raise ConsistencyError("bin wealth does not match the population")
    return abs(exact_aggregate(pop, policies, Y) - binned_aggregate(binning))


def within_bin_spread(binning: Binning, pop: PopulationState, policies) -> float:
    worst = 0.0
    for b in binning.bins:
        if b.members.size < 2:
            continue
        pol = policies[b.class_id]
        g = pol.gamma_at(pop.node_id, _state_of(pop, b.class_id), pop.omega[b.members])
        worst = max(worst, float(g.max() - g.min()))
    return worst


def reshuffle(binning: Binning, pop: PopulationState, rng: np.random.Generator,
              transfers: int | None = None) -> PopulationState:
    """Random pairwise wealth transfers inside each bin; bin totals and rate spans are kept.

    Wealth stays within [anchor, hi), where gamma varies by less than eps.
    """
    omega = pop.omega.copy()
    for b in binning.bins:
        m = b.members
        if m.size < 2:
            continue
        lo = max(b.lo, b.anchor)
        hi = np.nextafter(b.hi, -np.inf) if math.isfinite(b.hi) else b.hi
        pairs = rng.integers(m.size, size=(transfers or 2 * m.size, 2))
        for a, c in pairs:
            if a == c:
                continue
            i, j = m[a], m[c]
            lo_d = max(lo - omega[i], omega[j] - hi)
            hi_d = min(hi - omega[i], omega[j] - lo)
            if hi_d <= lo_d:
                continue
            d = rng.uniform(lo_d, hi_d)
            omega[i] += d
            omega[j] -= d
        omega[m] = np.clip(omega[m], lo, hi)
    return pop.with_omega(omega)


@dataclass(frozen=True)
class TotalVariation:
    value: float
    refinement_delta: float
    span: float


def total_variation(policy: Policy, node_id: int, state: int | None = None,
                    grid: np.ndarray | None = None, upper: float = 1.0) -> TotalVariation:
    """Sum of |delta gamma| over the grid restricted to (0, upper]."""
    if policy.is_terminal(node_id):
        return TotalVariation(0.0, 0.0, 0.0)
    x = policy.grids[node_id] if grid is None else np.asarray(grid, dtype=float)
    x = np.unique(np.append(x[x <= upper], upper))
    g = policy.gamma_at(node_id, state, x)
    full = float(np.abs(np.diff(g)).sum())
    coarse_x = np.unique(np.append(x[::2], x[-1]))
    coarse = float(np.abs(np.diff(policy.gamma_at(node_id, state, coarse_x))).sum())
    return TotalVariation(full, abs(full - coarse), float(g[-1] - g[0]))


@dataclass
class DerivativeReport:
    min_slope: float
    max_omega_slope: float
    max_scaled_slope: float
    max_envelope_error: float
    passed: bool
    details: dict = field(default_factory=dict)


def derivative_checks(policy: Policy, node_id: int, state: int | None = None,
                      grid: np.ndarray | None = None, floor: float = -1e-10,
                      envelope_step: float = 1e-5) -> DerivativeReport:
    """Central-difference slopes of gamma plus envelope-identity residuals."""
    if policy.is_terminal(node_id):
        return DerivativeReport(0.0, 0.0, 0.0, 0.0, True)
    if state is None:
        state = policy.default_state(node_id)
    x = policy.grids[node_id] if grid is None else np.asarray(grid, dtype=float)
    g = policy.gamma[(node_id, state)] if grid is None else policy.gamma_at(node_id, state, x)
    slope = (g[2:] - g[:-2]) / (x[2:] - x[:-2])
    xi = x[1:-1]
    sigma = policy.params.sigma
    min_slope = float(slope.min()) if slope.size else 0.0
    env = envelope_errors(policy, node_id, xi, state, envelope_step)
    return DerivativeReport(
        min_slope=min_slope,
        max_omega_slope=float((xi * slope).max()) if slope.size else 0.0,
        max_scaled_slope=float((slope * xi ** (1.0 - sigma)).max()) if slope.size else 0.0,
        max_envelope_error=float(env.max()) if env.size else 0.0,
        passed=min_slope >= floor,
    )


def envelope_errors(policy: Policy, node_id: int, omega, state: int | None = None,
                    step: float = 1e-5) -> np.ndarray:
    """Relative gap between a central difference of V and Y^(1-sigma)/(omega - s Omega)^sigma."""
    omega = np.asarray(omega, dtype=float)
    h = step * omega
    v_up, _ = value_and_derivative(policy, node_id, omega + h, state)
    v_dn, _ = value_and_derivative(policy, node_id, omega - h, state)
    fd = (v_up - v_dn) / (2.0 * h)
    _, exact = value_and_derivative(policy, node_id, omega, state)
    return np.abs(fd - exact) / np.abs(exact)
