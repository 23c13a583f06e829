"""Factor prices and the effective-variables transformation."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError


@dataclass(frozen=True)
class FactorPrices:
    R: float
    w: float

    def net_return(self, delta: float) -> float:
        return self.R - delta


@dataclass(frozen=True)
class EffectiveQuantities:
    Y_eff: float
    wage_scale: float


def output(K: float, L: float, z: float, alpha: float) -> float:
    """Cobb-Douglas output z K^alpha L^(1-alpha)."""
    if K <= 0.0 or L <= 0.0 or z <= 0.0:
        raise DomainError(f"output needs K, L, z > 0 (got K={K}, L={L}, z={z})")
    return z * K**alpha * L ** (1.0 - alpha)


def factor_prices(K: float, L: float, z: float, alpha: float) -> FactorPrices:
    """Competitive rental and wage rates for Cobb-Douglas technology."""
    if K <= 0.0 or L <= 0.0 or z <= 0.0:
        raise DomainError(f"factor prices need K, L, z > 0 (got K={K}, L={L}, z={z})")
    if not 0.0 < alpha <= 1.0:
        raise DomainError(f"alpha must lie in (0, 1], got {alpha}")
    k = K / L
    return FactorPrices(R=alpha * z * k ** (alpha - 1.0), w=(1.0 - alpha) * z * k**alpha)


def effective_transform(Y_t: float, Y_prev: float, Omega_prev: float, delta: float,
                        alpha: float) -> EffectiveQuantities:
    """Goods available once undepreciated capital is counted.

    ``Y_prev`` is the previous period's (effective) output, so that
    ``Omega_prev * Y_prev`` is the capital carried into this period.
    Employment shares measured against the effective aggregate are the real
    shares times ``wage_scale``.
    """
    if not 0.0 < delta <= 1.0:
        raise DomainError(f"delta must lie in (0, 1], got {delta}")
    if alpha <= 0.0:
        raise DomainError(f"alpha must be positive, got {alpha}")
    if Y_t <= 0.0:
        raise DomainError(f"Y_t must be positive, got {Y_t}")
    carried = (1.0 - delta) / alpha * Omega_prev * Y_prev
    if carried < 0.0:
        raise DomainError("carried capital must be non-negative")
    y_eff = Y_t + carried
    return EffectiveQuantities(Y_eff=y_eff, wage_scale=Y_t / y_eff)


def wealth_transition(s, e_eff, alpha):
    """Next-period wealth share: capital income plus the wage-bill share."""
    return alpha * s + (1.0 - alpha) * e_eff


@dataclass(frozen=True)
class Forecasts:
    """Investment fraction Omega at every non-terminal node (NaN at leaves)."""

    omega: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "omega", tuple(float(x) for x in self.omega))

    def __getitem__(self, node_id: int) -> float:
        return self.omega[node_id]

    def __len__(self):
        return len(self.omega)

    def as_array(self):
        return np.array(self.omega)

    def check(self, tree) -> None:
        if len(self.omega) != len(tree.nodes):
            raise DomainError(f"forecasts cover {len(self.omega)} nodes, tree has {len(tree.nodes)}")
        for n in tree.nodes:
            if n.children and not 0.0 < self.omega[n.id] < 1.0:
                raise DomainError(f"Omega at node {n.id} must lie in (0, 1), got {self.omega[n.id]}")

    @classmethod
    def constant(cls, tree, value: float) -> "Forecasts":
        return cls(tuple(value if n.children else float("nan") for n in tree.nodes))

    @classmethod
    def from_mapping(cls, tree, values) -> "Forecasts":
        return cls(tuple(float(values[n.id]) if n.children else float("nan") for n in tree.nodes))

    def to_list(self) -> list:
        return [None if x != x else x for x in self.omega]


class TreeEconomy:
    """Aggregate quantities along an event tree implied by a set of forecasts.

    Capital carried out of node n is ``Omega_n * Y_eff[n]``; output at a
    child is ``z K^alpha L^(1-alpha)``.  With ``effective=False`` (only legal
    when delta == 1) the effective-variable transform is bypassed entirely.
    """

    def __init__(self, tree, params, forecasts: Forecasts, effective: bool = True):
        forecasts.check(tree)
        if not effective and params.delta != 1.0:
            raise DomainError("the total-depreciation path requires delta == 1")
        n = len(tree.nodes)
        self.tree, self.params, self.forecasts = tree, params, forecasts
        self.effective = effective
        self.Y = np.empty(n)
        self.Y_eff = np.empty(n)
        self.wage_scale = np.empty(n)
        self.K = np.full(n, np.nan)
        root = tree.root
        self.Y[root.id] = self.Y_eff[root.id] = params.Y1
        self.wage_scale[root.id] = 1.0
        for node in sorted(tree.nodes, key=lambda x: x.t):
            if not node.children:
                continue
            k = forecasts[node.id] * self.Y_eff[node.id]
            self.K[node.id] = k
            for c in node.children:
                y = output(k, params.L_norm, tree.nodes[c].z, params.alpha)
                self.Y[c] = y
                if effective:
                    eq = effective_transform(y, self.Y_eff[node.id], forecasts[node.id],
                                             params.delta, params.alpha)
                    self.Y_eff[c] = eq.Y_eff
                    self.wage_scale[c] = eq.wage_scale
                else:
                    self.Y_eff[c] = y
                    self.wage_scale[c] = 1.0
