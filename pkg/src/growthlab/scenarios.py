"""Ready-made trees and process specs used by the scripts and the test suite."""

from __future__ import annotations

import itertools

from .params import EconomyParams, ProcessSpec
from .shocks import EventTree, tree_from_dict


def _chain_doc(T: int, z: float = 1.0) -> list[dict]:
    return [{"id": t, "t": t + 1, "z": z, "parent": t - 1 if t else None,
             "children": [t + 1] if t < T - 1 else [], "probs": [1.0] if t < T - 1 else []}
            for t in range(T)]


def deterministic_tree(T: int, share: float = 1.0, z: float = 1.0, N: int = 1) -> EventTree:
    """Chain of constant shocks; every agent earns ``share`` surely (0 means never employed)."""
    dist = [{"values": [share], "probs": [1.0]}]
    return tree_from_dict({
        "T": T, "class_sizes": [N], "nodes": _chain_doc(T, z),
        "classes": [{"name": "all", "initial_share": 1.0 / N,
                     "transitions": {str(t): dist for t in range(1, T)}}],
    })


def representative_tree(T: int, z: float = 1.0) -> EventTree:
    return deterministic_tree(T, 1.0, z, 1)


def no_employment_tree(T: int, zs=(1.0,), probs=(1.0,)) -> EventTree:
    """Recombining-free tree with the given shock branching and zero wages throughout."""
    return branching_tree(T, zs, probs, values=(0.0,), eprobs=(1.0,))


def branching_tree(T: int, zs, probs, values, eprobs, N: int = 1, root_z: float = 1.0) -> EventTree:
    """Every node branches over ``zs``; one class with a fixed employment distribution."""
    nodes = [{"id": 0, "t": 1, "z": root_z, "parent": None, "children": [], "probs": []}]
    frontier = [0]
    for t in range(2, T + 1):
        nxt = []
        for parent in frontier:
            for z, p in zip(zs, probs):
                cid = len(nodes)
                nodes.append({"id": cid, "t": t, "z": z, "parent": parent, "children": [], "probs": []})
                nodes[parent]["children"].append(cid)
                nodes[parent]["probs"].append(p)
                nxt.append(cid)
        frontier = nxt
    dist = [{"values": list(values), "probs": list(eprobs)}]
    return tree_from_dict({
        "T": T, "class_sizes": [N], "nodes": nodes,
        "classes": [{"name": "all", "initial_share": 1.0 / N,
                     "transitions": {str(n["id"]): dist for n in nodes[1:]}}],
    })


# Two small stochastic trees for brute-force comparisons.
ORACLE_TREES = {
    "binary": dict(zs=(1.05, 0.95), probs=(0.5, 0.5), values=(0.0, 1.0 / 9.0), eprobs=(0.1, 0.9)),
    "ternary": dict(zs=(1.1, 1.0, 0.9), probs=(0.25, 0.5, 0.25), values=(0.0, 0.1, 0.15),
                    eprobs=(0.2, 0.4, 0.4)),
}


def oracle_tree(name: str, T: int) -> EventTree:
    return branching_tree(T, **ORACLE_TREES[name])


def oracle_scenarios():
    """(label, tree, params) for T in {2, 3}, sigma in {0.5, 1, 2} and both oracle trees."""
    out = []
    for name, T, sigma in itertools.product(ORACLE_TREES, (2, 3), (0.5, 1.0, 2.0)):
        params = EconomyParams(alpha=0.36, beta=0.95, sigma=sigma, T=T, N=1)
        out.append((f"{name}-T{T}-sigma{sigma:g}", oracle_tree(name, T), params))
    return out


def ks_spec(**overrides) -> ProcessSpec:
    """Two-state aggregate chain with persistent own employment."""
    p = ((0.875, 0.125), (0.125, 0.875))
    # conditional own-employment transitions [e][e'] per aggregate move
    cond = {
        (0, 0): ((0.6, 0.4), (0.03, 0.97)),
        (0, 1): ((0.75, 0.25), (0.1, 0.9)),
        (1, 0): ((0.4, 0.6), (0.03, 0.97)),
        (1, 1): ((0.6, 0.4), (0.05, 0.95)),
    }
    pi = tuple(tuple(tuple(tuple(p[s][s2] * x for x in cond[(s, s2)][e]) for e in (0, 1))
                     for s2 in (0, 1)) for s in (0, 1))
    kw = dict(kind="ks-markov", z_g=1.01, z_b=0.99, p=p, pi=pi, min_unemp_prob=0.01)
    kw.update(overrides)
    return ProcessSpec(**kw)


def uniform_spec(u: float = 0.1, **overrides) -> ProcessSpec:
    return ProcessSpec(kind="uniform-employment", u=u, **overrides)
