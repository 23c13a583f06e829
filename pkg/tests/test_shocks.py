import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from growthlab.errors import ResourceError, ValidationError
from growthlab.params import EconomyParams, ProcessSpec
from growthlab.scenarios import branching_tree, ks_spec, representative_tree, uniform_spec
from growthlab.shocks import (build_event_tree, draw_employment, tree_from_dict,
                              validate_process)


def params(T=2, N=10):
    return EconomyParams(alpha=0.36, beta=0.95, sigma=1.0, T=T, N=N)


def test_uniform_tree_shape_and_distribution():
    tree = build_event_tree(uniform_spec(0.1), params())
    assert len(tree.nodes) == 2 and tree.root.children == (1,)
    d = tree.dist(0, 1, 0)
    assert d.values == (0.0, pytest.approx(1.0 / 9.0))
    assert d.probs == (0.1, 0.9)
    assert tree.z_max == 10.0


def test_ks_absorbing_good_state_is_a_chain():
    spec = ks_spec(p=((1.0, 0.0), (0.0, 1.0)),
                   pi=(((( 0.6, 0.4), (0.03, 0.97)), ((0, 0), (0, 0))),
                       (((0, 0), (0, 0)), ((0.6, 0.4), (0.05, 0.95)))))
    tree = build_event_tree(spec, params(T=4))
    assert len(tree.nodes) == 4
    assert all(n.z == 1.01 for n in tree.nodes)
    assert all(len(n.children) <= 1 for n in tree.nodes)


def test_ks_tree_structure():
    tree = build_event_tree(ks_spec(), params(T=3, N=100))
    assert len(tree.nodes) == 7
    assert [c.name for c in tree.classes] == ["employed", "unemployed"]
    assert sum(tree.class_sizes) == 100
    # employed share is the inverse head count of the employed at the child
    u = tree.meta["unemployment"]
    for n in tree.nodes[1:]:
        d = tree.dist(0, n.id, 1)
        assert d.values[1] == pytest.approx(1.0 / ((1.0 - u[n.id]) * 100))
        assert d.probs[0] + d.probs[1] == pytest.approx(1.0, abs=1e-12)


def test_explicit_passthrough():
    tree = representative_tree(3)
    out = build_event_tree(ProcessSpec(kind="explicit-tree", tree=tree), params(T=3, N=1))
    assert out is tree
    again = build_event_tree(ProcessSpec(kind="explicit-tree", tree=tree.to_dict()), params(T=3, N=1))
    assert again.to_dict() == tree.to_dict()


def test_explicit_depth_mismatch():
    with pytest.raises(ValidationError):
        build_event_tree(ProcessSpec(kind="explicit-tree", tree=representative_tree(3)), params(T=2))


def test_node_cap():
    with pytest.raises(ResourceError):
        build_event_tree(ks_spec(), params(T=12), max_nodes=100)


@pytest.mark.parametrize("mutate", [
    lambda d: d["nodes"][0].update(probs=[0.6]),
    lambda d: d["nodes"][1].update(z=-1.0),
    lambda d: d["classes"][0]["transitions"]["1"][0].update(values=[1.5]),
    lambda d: d["classes"][0]["transitions"]["1"][0].update(probs=[0.9]),
    lambda d: d.update(T=3),
    lambda d: d.pop("nodes"),
])
def test_malformed_trees(mutate):
    doc = representative_tree(2).to_dict()
    mutate(doc)
    with pytest.raises(ValidationError):
        tree_from_dict(doc)


@pytest.mark.parametrize("build", [
    lambda: build_event_tree(uniform_spec(0.1), params(T=4)),
    lambda: build_event_tree(ks_spec(), params(T=5, N=50)),
    lambda: branching_tree(4, (1.1, 1.0, 0.9), (0.2, 0.5, 0.3), (0.0, 0.2), (0.3, 0.7)),
])
def test_leaf_probabilities_sum_to_one(build):
    tree = build()
    total = sum(tree.path_probability(n.id) for n in tree.leaves())
    assert total == pytest.approx(1.0, abs=1e-10)


def test_validation_uniform_passes():
    rep = validate_process(build_event_tree(uniform_spec(0.1), params()), 0.05)
    assert rep.passed and rep.entries[0]["unemp_mass"] == 0.1


def test_validation_full_employment_fails():
    rep = validate_process(representative_tree(2), 0.01)
    assert not rep.passed
    assert rep.entries[0]["unemp_mass"] == 0.0
    assert "node 1" in rep.failures[0]


def test_validation_ks_passes():
    tree = build_event_tree(ks_spec(), params(T=4, N=20))
    rep = validate_process(tree, 0.01, assignment=np.repeat([0, 1], tree.class_sizes))
    assert rep.passed, rep.failures


def test_validation_assignment_and_zmax():
    tree = build_event_tree(uniform_spec(0.1), params())
    rep = validate_process(tree, 0.05, assignment=[0] * 9 + [3])
    assert not rep.passed
    doc = tree.to_dict()
    doc["z_max"] = 0.5
    assert not validate_process(tree_from_dict(doc), 0.05).passed


def test_exact_draw_uniform(rng):
    tree = build_event_tree(uniform_spec(0.1), params())
    shares, nxt = draw_employment(tree, 1, np.zeros(10, int), np.zeros(10, int), rng)
    assert np.count_nonzero(shares) == 9
    assert np.allclose(shares[shares > 0], 1.0 / 9.0)
    assert abs(shares.sum() - 1.0) <= 1e-12


def test_single_agent_draw(rng):
    tree = representative_tree(2)
    shares, _ = draw_employment(tree, 1, np.zeros(1, int), np.zeros(1, int), rng)
    assert shares.tolist() == [1.0]


def test_nobody_employable(rng):
    tree = branching_tree(2, (1.0,), (1.0,), (0.0,), (1.0,), N=3)
    with pytest.raises(ValidationError):
        draw_employment(tree, 1, np.zeros(3, int), np.zeros(3, int), rng)
    with pytest.raises(ValidationError):
        draw_employment(tree, 1, np.zeros(3, int), np.zeros(3, int), rng, mode="independent")


@given(st.integers(2, 60), st.floats(0.01, 0.5), st.integers(0, 2**32 - 1),
       st.sampled_from(["exact", "independent"]))
def test_shares_partition_the_bill(N, u, seed, mode):
    tree = build_event_tree(uniform_spec(u), params(N=N))
    shares, _ = draw_employment(tree, 1, np.zeros(N, int), np.zeros(N, int),
                                np.random.default_rng(seed), mode=mode)
    assert abs(shares.sum() - 1.0) <= 1e-12
    assert np.all(shares >= 0)


def test_ks_draw_tracks_own_state(rng):
    tree = build_event_tree(ks_spec(), params(T=2, N=40))
    classes = np.repeat([0, 1], tree.class_sizes)
    states = np.array([tree.classes[c].initial_state for c in classes])
    for child in tree.root.children:
        shares, nxt = draw_employment(tree, child, classes, states, rng)
        assert np.array_equal(nxt == 1, shares > 0)
