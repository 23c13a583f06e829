"""Event trees of aggregate shocks with per-class employment distributions.

An agent's employment outcome at a transition may depend on its own
employment state at the parent node (Markov employment, as in the
Krusell-Smith setup).  Processes without such dependence use a single
state per class.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .errors import ResourceError, ValidationError
from .params import EconomyParams, ProcessSpec

PROB_TOL = 1e-12
MAX_NODES = 250_000


@dataclass(frozen=True)
class Node:
    id: int
    t: int
    z: float
    parent: int | None
    children: tuple[int, ...] = ()
    probs: tuple[float, ...] = ()
    label: str = ""

    @property
    def terminal(self) -> bool:
        return not self.children


@dataclass(frozen=True)
class EmploymentDist:
    """Finite employment distribution over wage-bill shares."""

    values: tuple[float, ...]
    probs: tuple[float, ...]
    next_states: tuple[int, ...]

    @property
    def unemployment_mass(self) -> float:
        return float(sum(p for v, p in zip(self.values, self.probs) if v == 0.0))

    @property
    def max_value(self) -> float:
        return max(self.values)


@dataclass(frozen=True)
class ProspectsClass:
    name: str
    states: tuple[str, ...]
    initial_state: int
    # child node id -> one distribution per own state at the parent
    transitions: Mapping[int, tuple[EmploymentDist, ...]]
    initial_share: float = 0.0


@dataclass(frozen=True)
class EventTree:
    nodes: tuple[Node, ...]
    classes: tuple[ProspectsClass, ...]
    T: int
    z_max: float
    class_sizes: tuple[int, ...] = ()
    meta: dict = field(default_factory=dict, compare=False)

    @property
    def root(self) -> Node:
        return self.nodes[0]

    def __len__(self):
        return len(self.nodes)

    def nonterminal(self) -> list[Node]:
        return [n for n in self.nodes if n.children]

    def leaves(self) -> list[Node]:
        return [n for n in self.nodes if not n.children]

    def bottom_up(self) -> list[Node]:
        return sorted(self.nodes, key=lambda n: -n.t)

    def path(self, node_id: int) -> list[int]:
        out = []
        cur: int | None = node_id
        while cur is not None:
            out.append(cur)
            cur = self.nodes[cur].parent
        return out[::-1]

    def path_probability(self, node_id: int) -> float:
        prob = 1.0
        ids = self.path(node_id)
        for parent, child in zip(ids[:-1], ids[1:]):
            node = self.nodes[parent]
            prob *= node.probs[node.children.index(child)]
        return prob

    def dist(self, class_id: int, child_id: int, state: int) -> EmploymentDist:
        return self.classes[class_id].transitions[child_id][state]

    def to_dict(self) -> dict:
        return {
            "T": self.T,
            "z_max": self.z_max,
            "class_sizes": list(self.class_sizes),
            "nodes": [
                {"id": n.id, "t": n.t, "z": n.z, "parent": n.parent,
                 "children": list(n.children), "probs": list(n.probs), "label": n.label}
                for n in self.nodes
            ],
            "classes": [
                {"name": c.name, "states": list(c.states), "initial_state": c.initial_state,
                 "initial_share": c.initial_share,
                 "transitions": {
                     str(child): [
                         {"values": list(d.values), "probs": list(d.probs),
                          "next_states": list(d.next_states)}
                         for d in dists
                     ]
                     for child, dists in sorted(c.transitions.items())
                 }}
                for c in self.classes
            ],
        }


def tree_from_dict(doc: Mapping) -> EventTree:
    """Parse (and structurally check) a literal tree document."""
    try:
        raw_nodes = sorted(doc["nodes"], key=lambda n: int(n["id"]))
        nodes = []
        for i, n in enumerate(raw_nodes):
            if int(n["id"]) != i:
                raise ValidationError("node ids must be 0..n-1")
            nodes.append(Node(
                id=i, t=int(n["t"]), z=float(n["z"]),
                parent=None if n.get("parent") is None else int(n["parent"]),
                children=tuple(int(c) for c in n.get("children", ())),
                probs=tuple(float(p) for p in n.get("probs", ())),
                label=str(n.get("label", "")),
            ))
        classes = []
        for c in doc["classes"]:
            states = tuple(c.get("states", ("s",)))
            trans = {}
            for child, dists in c["transitions"].items():
                trans[int(child)] = tuple(
                    EmploymentDist(
                        values=tuple(float(v) for v in d["values"]),
                        probs=tuple(float(p) for p in d["probs"]),
                        next_states=tuple(int(s) for s in d.get("next_states", [0] * len(d["values"]))),
                    )
                    for d in dists
                )
            classes.append(ProspectsClass(
                name=str(c.get("name", f"class{len(classes)}")), states=states,
                initial_state=int(c.get("initial_state", 0)), transitions=trans,
                initial_share=float(c.get("initial_share", 0.0)),
            ))
        z_max = doc.get("z_max")
        if z_max is None:
            z_max = 10.0 * max(n.z for n in nodes)
        tree = EventTree(
            nodes=tuple(_link_parents(nodes)), classes=tuple(classes), T=int(doc["T"]),
            z_max=float(z_max), class_sizes=tuple(int(x) for x in doc.get("class_sizes", ())),
        )
    except (KeyError, TypeError) as exc:
        raise ValidationError(f"malformed tree document: {exc!r}") from exc
    check_tree(tree)
    return tree


def _link_parents(nodes: list[Node]) -> list[Node]:
    parents: dict[int, int] = {}
    for n in nodes:
        for c in n.children:
            parents[c] = n.id
    out = []
    for n in nodes:
        parent = parents.get(n.id, n.parent)
        out.append(Node(n.id, n.t, n.z, parent, n.children, n.probs, n.label))
    return out


def check_tree(tree: EventTree) -> None:
    """Raise ValidationError unless the structural invariants hold."""
    nodes = tree.nodes
    if not nodes:
        raise ValidationError("tree has no nodes")
    roots = [n for n in nodes if n.parent is None]
    if len(roots) != 1 or roots[0].id != 0 or roots[0].t != 1:
        raise ValidationError("tree needs exactly one root, id 0, at t = 1")
    for n in nodes:
        if n.z <= 0.0:
            raise ValidationError(f"node {n.id}: z must be positive")
        if len(n.children) != len(n.probs):
            raise ValidationError(f"node {n.id}: children/probs length mismatch")
        if n.children:
            if min(n.probs) < 0.0 or abs(sum(n.probs) - 1.0) > PROB_TOL:
                raise ValidationError(f"node {n.id}: child probabilities sum to {sum(n.probs)!r}")
            for c in n.children:
                if nodes[c].t != n.t + 1:
                    raise ValidationError(f"node {c}: period must follow its parent's")
        elif n.t != tree.T:
            raise ValidationError(f"leaf {n.id} at t={n.t}, expected depth T={tree.T}")
    if not tree.classes:
        raise ValidationError("tree declares no prospects classes")
    for ci, cls in enumerate(tree.classes):
        if not 0 <= cls.initial_state < len(cls.states):
            raise ValidationError(f"class {cls.name}: bad initial state")
        for n in nodes[1:]:
            dists = cls.transitions.get(n.id)
            if dists is None or len(dists) != len(cls.states):
                raise ValidationError(f"class {cls.name}: missing distributions into node {n.id}")
            for d in dists:
                if not (len(d.values) == len(d.probs) == len(d.next_states)):
                    raise ValidationError(f"class {cls.name}, node {n.id}: ragged distribution")
                if min(d.values) < 0.0 or max(d.values) > 1.0:
                    raise ValidationError(f"class {cls.name}, node {n.id}: support outside [0, 1]")
                if min(d.probs) < 0.0 or abs(sum(d.probs) - 1.0) > PROB_TOL:
                    raise ValidationError(
                        f"class {cls.name}, node {n.id}: probabilities sum to {sum(d.probs)!r}")
                if any(not 0 <= s < len(cls.states) for s in d.next_states):
                    raise ValidationError(f"class {cls.name}, node {n.id}: bad next state")
    if tree.class_sizes and len(tree.class_sizes) != len(tree.classes):
        raise ValidationError("class_sizes must have one entry per class")


def _chain(T: int, z_of_t, limit: int = MAX_NODES) -> list[Node]:
    if T > limit:
        raise ResourceError(f"tree depth {T} exceeds node cap {limit}")
    nodes = []
    for t in range(1, T + 1):
        i = t - 1
        nodes.append(Node(id=i, t=t, z=z_of_t(t), parent=None if i == 0 else i - 1,
                          children=(i + 1,) if t < T else (), probs=(1.0,) if t < T else ()))
    return nodes


def build_event_tree(spec: ProcessSpec, params: EconomyParams,
                     max_nodes: int = MAX_NODES) -> EventTree:
    """Expand a process description into a depth-T event tree."""
    if spec.kind == "explicit-tree":
        tree = spec.tree if isinstance(spec.tree, EventTree) else tree_from_dict(spec.tree)
        if tree.T != params.T:
            raise ValidationError(f"explicit tree depth {tree.T} != T={params.T}")
        return tree
    if spec.kind == "uniform-employment":
        return _uniform_tree(spec, params, max_nodes)
    return _ks_tree(spec, params, max_nodes)


def _uniform_tree(spec: ProcessSpec, params: EconomyParams, max_nodes: int) -> EventTree:
    u, N = spec.u, params.N
    nodes = _chain(params.T, lambda t: spec.z, max_nodes)
    share = 1.0 / ((1.0 - u) * N)
    if share > 1.0:
        raise ValidationError(f"employed share 1/((1-u)N) = {share} exceeds 1")
    dist = EmploymentDist(values=(0.0, share), probs=(u, 1.0 - u), next_states=(0, 0))
    cls = ProspectsClass(name="all", states=("any",), initial_state=0,
                         transitions={n.id: (dist,) for n in nodes[1:]},
                         initial_share=1.0 / N)
    z_max = spec.z_max if spec.z_max is not None else 10.0 * spec.z
    tree = EventTree(nodes=tuple(nodes), classes=(cls,), T=params.T, z_max=z_max,
                     class_sizes=(N,), meta={"kind": spec.kind, "u": u})
    check_tree(tree)
    return tree


def _ks_tree(spec: ProcessSpec, params: EconomyParams, max_nodes: int) -> EventTree:
    # aggregate state index: 0 = good, 1 = bad; own state: 0 = unemployed, 1 = employed
    p = np.asarray(spec.p, dtype=float)
    pi = np.asarray(spec.pi, dtype=float)
    zs = (spec.z_g, spec.z_b)
    N = params.N
    s0 = 0 if spec.initial_state == "g" else 1
    u0 = spec.u0
    if u0 is None:
        # conditional unemployment rate implied by staying in the initial state
        cond = pi[s0, s0] / p[s0, s0] if p[s0, s0] > 0 else pi[s0, 1 - s0] / p[s0, 1 - s0]
        u0 = _stationary_unemployment(cond)

    nodes: list[Node] = []
    agg_state: list[int] = []
    unemp: list[float] = []
    nodes.append(Node(id=0, t=1, z=zs[s0], parent=None, label="g" if s0 == 0 else "b"))
    agg_state.append(s0)
    unemp.append(u0)
    frontier = [0]
    children_of: dict[int, list[tuple[int, float]]] = {}
    for t in range(2, params.T + 1):
        nxt = []
        for nid in frontier:
            s = agg_state[nid]
            kids = []
            for s2 in (0, 1):
                if p[s, s2] <= 0.0:
                    continue
                cid = len(nodes)
                if cid >= max_nodes:
                    raise ResourceError(f"ks-markov tree exceeds node cap {max_nodes}")
                cond = pi[s, s2] / p[s, s2]
                u_par = unemp[nid]
                u_child = u_par * cond[0, 0] + (1.0 - u_par) * cond[1, 0]
                nodes.append(Node(id=cid, t=t, z=zs[s2], parent=nid,
                                  label=nodes[nid].label + ("g" if s2 == 0 else "b")))
                agg_state.append(s2)
                unemp.append(u_child)
                kids.append((cid, float(p[s, s2])))
                nxt.append(cid)
            children_of[nid] = kids
        frontier = nxt

    linked = []
    for n in nodes:
        kids = children_of.get(n.id, [])
        linked.append(Node(n.id, n.t, n.z, n.parent, tuple(c for c, _ in kids),
                           tuple(q for _, q in kids), n.label))

    transitions: dict[int, tuple[EmploymentDist, ...]] = {}
    for n in linked[1:]:
        s, s2 = agg_state[n.parent], agg_state[n.id]
        cond = pi[s, s2] / p[s, s2]
        if unemp[n.id] >= 1.0:
            raise ValidationError(f"node {n.id}: everyone unemployed, wage shares undefined")
        share = min(1.0, 1.0 / ((1.0 - unemp[n.id]) * N))
        transitions[n.id] = tuple(
            EmploymentDist(values=(0.0, share), probs=(float(cond[e, 0]), float(cond[e, 1])),
                           next_states=(0, 1))
            for e in (0, 1)
        )
    n_unemp = int(round(u0 * N))
    n_emp = N - n_unemp
    emp_share = 1.0 / n_emp if n_emp else 0.0
    classes = (
        ProspectsClass(name="employed", states=("unemployed", "employed"), initial_state=1,
                       transitions=transitions, initial_share=emp_share),
        ProspectsClass(name="unemployed", states=("unemployed", "employed"), initial_state=0,
                       transitions=transitions, initial_share=0.0),
    )
    z_max = spec.z_max if spec.z_max is not None else 10.0 * spec.z_g
    tree = EventTree(nodes=tuple(linked), classes=classes, T=params.T, z_max=z_max,
                     class_sizes=(n_emp, n_unemp),
                     meta={"kind": spec.kind, "unemployment": unemp, "agg_state": agg_state})
    check_tree(tree)
    return tree


def _stationary_unemployment(cond: np.ndarray) -> float:
    # two-state chain on own employment; cond[e, e'] conditional probabilities
    a, b = cond[1, 0], cond[0, 1]
    return float(a / (a + b)) if a + b > 0 else 0.0


@dataclass
class ValidationReport:
    passed: bool
    min_unemp_prob: float
    entries: list[dict]
    failures: list[str]

    def to_dict(self) -> dict:
        return {"passed": self.passed, "min_unemp_prob": self.min_unemp_prob,
                "failures": self.failures, "entries": self.entries}


def validate_process(tree: EventTree, c: float,
                     assignment: Sequence[int] | None = None) -> ValidationReport:
    """Check risk of unemployment, class assignment, and bounded shocks.

    Never raises for a failing process; the report says what failed and where.
    """
    entries, failures = [], []
    for ci, cls in enumerate(tree.classes):
        for n in tree.nodes[1:]:
            for k, d in enumerate(cls.transitions[n.id]):
                mass = d.unemployment_mass
                entries.append({"class": cls.name, "node": n.id, "state": cls.states[k],
                                "unemp_mass": mass})
                if mass < c:
                    failures.append(f"class {cls.name!r}, node {n.id}, state "
                                    f"{cls.states[k]!r}: P(e=0) = {mass:g} < {c:g}")
    for n in tree.nodes:
        if n.z > tree.z_max:
            failures.append(f"node {n.id}: z = {n.z:g} exceeds z_max = {tree.z_max:g}")
    if assignment is not None:
        labels = np.asarray(assignment)
        bad = np.flatnonzero((labels < 0) | (labels >= len(tree.classes)))
        if bad.size:
            failures.append(f"agents {bad[:10].tolist()} not assigned to a declared class")
        if tree.class_sizes:
            counts = np.bincount(labels[labels >= 0], minlength=len(tree.classes))
            if tuple(counts[: len(tree.classes)]) != tuple(tree.class_sizes):
                failures.append(f"class sizes {counts.tolist()} != declared {list(tree.class_sizes)}")
    return ValidationReport(passed=not failures, min_unemp_prob=c, entries=entries,
                            failures=failures)


def draw_employment(tree: EventTree, child_id: int, classes: np.ndarray, states: np.ndarray,
                    rng: np.random.Generator, mode: str = "exact",
                    max_retries: int = 100) -> tuple[np.ndarray, np.ndarray]:
    """Realize wage-bill shares for every agent on the transition into ``child_id``.

    Returns ``(shares, next_states)``; shares sum to one.  ``exact`` mode
    employs exactly round(sum of employment probabilities) agents, chosen at
    random with those probabilities as weights, and splits the bill equally
    among them.  ``independent`` mode draws each agent from its own
    distribution and renormalizes.
    """
    classes = np.asarray(classes, dtype=int)
    states = np.asarray(states, dtype=int)
    n = classes.size
    dists = [tree.dist(c, child_id, s) for c, s in zip(classes, states)]
    if mode == "exact":
        p_emp = np.array([1.0 - d.unemployment_mass for d in dists])
        eligible = np.count_nonzero(p_emp)
        if eligible == 0:
            raise ValidationError(f"no agent can be employed on the transition into node {child_id}")
        n_emp = min(max(int(round(p_emp.sum())), 1), eligible)
        chosen = rng.choice(n, size=n_emp, replace=False, p=p_emp / p_emp.sum())
        shares = np.zeros(n)
        shares[chosen] = 1.0 / n_emp
        nxt = np.empty(n, dtype=int)
        for j, d in enumerate(dists):
            zero_idx = [i for i, v in enumerate(d.values) if v == 0.0]
            pos_idx = [i for i, v in enumerate(d.values) if v > 0.0]
            pick = pos_idx if shares[j] > 0 else zero_idx
            if not pick:
                pick = list(range(len(d.values)))
            nxt[j] = d.next_states[pick[0]]
        return shares, nxt
    if mode != "independent":
        raise ValueError(f"unknown employment mode {mode!r}")
    for _ in range(max_retries):
        raw = np.empty(n)
        nxt = np.empty(n, dtype=int)
        for j, d in enumerate(dists):
            k = rng.choice(len(d.values), p=np.asarray(d.probs))
            raw[j] = d.values[k]
            nxt[j] = d.next_states[k]
        total = raw.sum()
        if total > 0.0:
            return raw / total, nxt
    raise ValidationError(f"all agents unemployed in {max_retries} draws on node {child_id}")
