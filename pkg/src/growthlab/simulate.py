"""Forward simulation of agent panels along sampled aggregate paths."""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .econ import Forecasts, TreeEconomy
from .params import EconomyParams
from .population import PopulationState
from .shocks import EventTree, draw_employment

RNG_NAME = "Philox"


def stream(seed: int, path: int, period: int) -> np.random.Generator:
    """Counter-based stream keyed by (seed, path, period)."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, path, period])))


@dataclass(frozen=True)
class SimulationPanel:
    """Arrays indexed [path, period] or [path, period, agent]; goods in output units."""

    nodes: np.ndarray
    Y: np.ndarray
    K: np.ndarray
    investment: np.ndarray
    e: np.ndarray
    omega: np.ndarray
    s: np.ndarray
    c: np.ndarray
    classes: np.ndarray
    clamped: int
    seed: int
    mode: str
    scenario_hash: str = ""

    @property
    def n_paths(self) -> int:
        return self.nodes.shape[0]

    @property
    def T(self) -> int:
        return self.nodes.shape[1]

    def clearing_residuals(self) -> np.ndarray:
        """Realized sum of investment shares minus one (NaN at terminal periods)."""
        out = self.s.sum(axis=2) - 1.0
        out[:, -1] = np.nan
        return out

    def accounting_residuals(self) -> np.ndarray:
        """Consumption plus investment minus the wealth base, per path and period."""
        return self.c.sum(axis=2) + self.investment - self.omega.sum(axis=2) * self.Y

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["scenario", "path", "t", "node", "Y", "K", "agent", "class",
                        "e", "omega", "s", "c"])
            for p in range(self.n_paths):
                for t in range(self.T):
                    for j in range(self.e.shape[2]):
                        w.writerow([self.scenario_hash, p, t + 1, int(self.nodes[p, t]),
                                    repr(float(self.Y[p, t])), repr(float(self.K[p, t])), j,
                                    int(self.classes[j]), repr(float(self.e[p, t, j])),
                                    repr(float(self.omega[p, t, j])), repr(float(self.s[p, t, j])),
                                    repr(float(self.c[p, t, j]))])


def _shares(policies, node_id, classes, states, omega):
    s = np.zeros_like(omega)
    clamped = 0
    for key in set(zip(classes.tolist(), states.tolist())):
        mask = (classes == key[0]) & (states == key[1])
        pol = policies[key[0]]
        s[mask] = pol.savings_share(node_id, key[1], omega[mask])
        clamped += int(np.count_nonzero(pol.clamped(node_id, omega[mask])))
    return s, clamped


def simulate_paths(tree: EventTree, params: EconomyParams, forecasts: Forecasts, policies,
                   population: PopulationState, seed: int = 0, n_paths: int = 10,
                   mode: str = "exact", effective: bool = True,
                   initial_wage_shares: np.ndarray | None = None,
                   scenario_hash: str = "") -> SimulationPanel:
    """Draw aggregate branches and employment, then apply the decision rules.

    Aggregate output follows the forecasts (capital carried out of a node is
    Omega Y_eff); realized investment is reported separately so clearing
    can be checked path by path.
    """
    econ = TreeEconomy(tree, params, forecasts, effective=effective)
    T, N = tree.T, population.N
    alpha = params.alpha
    classes = population.classes
    if initial_wage_shares is None:
        initial_wage_shares = np.array([tree.classes[c].initial_share for c in classes])
    shape = (n_paths, T, N)
    e = np.zeros(shape)
    om = np.zeros(shape)
    s = np.zeros(shape)
    c = np.zeros(shape)
    nodes = np.zeros((n_paths, T), dtype=int)
    Y = np.zeros((n_paths, T))
    K = np.zeros((n_paths, T))
    inv = np.zeros((n_paths, T))
    clamped = 0
    for p in range(n_paths):
        node_id = 0
        states = population.states.copy()
        wealth = population.omega.copy()
        wages = np.asarray(initial_wage_shares, dtype=float)
        for t in range(T):
            node = tree.nodes[node_id]
            base = econ.Y_eff[node_id]
            nodes[p, t] = node_id
            Y[p, t] = base
            e[p, t] = wages
            om[p, t] = wealth
            if node.children:
                Omega = forecasts[node_id]
                share, nclamp = _shares(policies, node_id, classes, states, wealth)
                clamped += nclamp
                K[p, t] = Omega * base
                inv[p, t] = share.sum() * Omega * base
                s[p, t] = share
                c[p, t] = (wealth - share * Omega) * base
                rng = stream(seed, p, t + 1)
                child = node.children[int(rng.choice(len(node.children), p=np.asarray(node.probs)))]
                wages, states = draw_employment(tree, child, classes, states, rng, mode=mode)
                wealth = alpha * share + (1.0 - alpha) * wages * econ.wage_scale[child]
                node_id = child
            else:
                c[p, t] = wealth * base
    return SimulationPanel(nodes, Y, K, inv, e, om, s, c, np.asarray(classes), clamped, seed,
                           mode, scenario_hash)
