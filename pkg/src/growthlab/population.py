"""Agent populations: prospects class, own employment state and wealth share."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConsistencyError, DomainError, ValidationError
from .params import EconomyParams, PopulationOptions
from .shocks import EventTree


@dataclass(frozen=True)
class PopulationState:
    node_id: int
    classes: np.ndarray
    states: np.ndarray
    omega: np.ndarray

    def __post_init__(self):
        for name in ("classes", "states", "omega"):
            arr = np.asarray(getattr(self, name), dtype=float if name == "omega" else int)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if not (self.classes.shape == self.states.shape == self.omega.shape):
            raise ConsistencyError("population arrays must share one shape")
        if self.omega.ndim != 1:
            raise ConsistencyError("population arrays must be one-dimensional")
        if np.any(self.omega < 0.0) or not np.all(np.isfinite(self.omega)):
            raise DomainError("wealth shares must be finite and non-negative")

    @property
    def N(self) -> int:
        return int(self.omega.size)

    def members(self, class_id: int) -> np.ndarray:
        return np.flatnonzero(self.classes == class_id)

    def with_omega(self, omega: np.ndarray, states: np.ndarray | None = None,
                   node_id: int | None = None) -> "PopulationState":
        return PopulationState(self.node_id if node_id is None else node_id, self.classes,
                               self.states if states is None else states, omega)


def class_assignment(tree: EventTree, N: int) -> np.ndarray:
    """Agents listed class by class, sized by ``tree.class_sizes`` (or all in class 0)."""
    sizes = tree.class_sizes or (N,) + (0,) * (len(tree.classes) - 1)
    if sum(sizes) != N:
        raise ValidationError(f"class sizes {list(sizes)} do not add up to N={N}")
    return np.repeat(np.arange(len(sizes)), sizes)


def initial_population(tree: EventTree, params: EconomyParams,
                       opts: PopulationOptions | None = None) -> PopulationState:
    """Root wealth shares omega_j = (1 - alpha) e_j + alpha s_j0."""
    opts = opts or PopulationOptions()
    N = params.N
    classes = class_assignment(tree, N)
    states = np.array([tree.classes[c].initial_state for c in classes], dtype=int)
    e = np.array([tree.classes[c].initial_share for c in classes])
    if abs(e.sum() - 1.0) > 1e-12:
        raise ValidationError(f"initial wage shares sum to {e.sum()!r}, expected 1")
    cap = opts.capital
    if isinstance(cap, str):
        if cap == "equal":
            s0 = np.full(N, 1.0 / N)
        elif cap == "dirichlet":
            if not opts.concentration > 0.0:
                raise DomainError("concentration must be positive")
            s0 = np.random.default_rng(opts.seed).dirichlet(np.full(N, opts.concentration))
        else:
            raise ValidationError(f"unknown capital distribution {cap!r}")
    else:
        s0 = np.asarray(cap, dtype=float)
        if s0.shape != (N,) or np.any(s0 < 0.0) or abs(s0.sum() - 1.0) > 1e-12:
            raise ValidationError("explicit capital shares must be N non-negative values summing to 1")
    omega = (1.0 - params.alpha) * e + params.alpha * s0
    return PopulationState(0, classes, states, omega)
