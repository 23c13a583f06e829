import numpy as np
import pytest
from conftest import uniform_case
from hypothesis import given
from hypothesis import strategies as st

from growthlab.errors import ConsistencyError, DomainError, ValidationError
from growthlab.params import PopulationOptions
from growthlab.population import PopulationState, class_assignment, initial_population
from growthlab.scenarios import deterministic_tree


def test_equal_capital_uniform_wages():
    tree, params, _ = uniform_case(N=10)
    pop = initial_population(tree, params)
    assert pop.N == 10 and pop.node_id == 0
    assert pop.omega.sum() == pytest.approx(1.0, abs=1e-14)
    assert np.allclose(pop.omega, 0.1)


@given(st.integers(0, 10_000), st.floats(0.1, 5.0))
def test_dirichlet_shares_sum_to_one(seed, conc):
    tree, params, _ = uniform_case(N=7)
    pop = initial_population(tree, params, PopulationOptions("dirichlet", conc, seed))
    assert pop.omega.sum() == pytest.approx(1.0, abs=1e-12)
    assert np.all(pop.omega >= (1 - params.alpha) / 7 - 1e-15)


def test_dirichlet_is_seeded():
    tree, params, _ = uniform_case(N=20)
    a = initial_population(tree, params, PopulationOptions("dirichlet", seed=4))
    b = initial_population(tree, params, PopulationOptions("dirichlet", seed=4))
    c = initial_population(tree, params, PopulationOptions("dirichlet", seed=5))
    assert np.array_equal(a.omega, b.omega)
    assert not np.array_equal(a.omega, c.omega)


def test_explicit_capital():
    tree, params, _ = uniform_case(N=4)
    pop = initial_population(tree, params, PopulationOptions([1.0, 0.0, 0.0, 0.0]))
    assert pop.omega[0] == pytest.approx(params.alpha + (1 - params.alpha) / 4)
    with pytest.raises(ValidationError):
        initial_population(tree, params, PopulationOptions([0.5, 0.5]))
    with pytest.raises(ValidationError):
        initial_population(tree, params, PopulationOptions("lognormal"))
    with pytest.raises(DomainError):
        initial_population(tree, params, PopulationOptions("dirichlet", concentration=0.0))


def test_class_sizes_must_match_population():
    tree = deterministic_tree(2, share=1.0, N=1)
    _, params, _ = uniform_case(N=3)
    with pytest.raises(ValidationError):
        initial_population(tree, params)


def test_class_assignment():
    tree, _, _ = uniform_case(N=5)
    assert np.array_equal(class_assignment(tree, 5), np.zeros(5, dtype=int))


def test_state_is_immutable_and_validated():
    pop = PopulationState(0, [0, 0], [1, 1], [0.4, 0.6])
    with pytest.raises(ValueError):
        pop.omega[0] = 1.0
    with pytest.raises(ConsistencyError):
        PopulationState(0, [0], [1, 1], [0.4, 0.6])
    with pytest.raises(DomainError):
        PopulationState(0, [0, 0], [1, 1], [-0.1, 0.6])
    moved = pop.with_omega(np.array([0.5, 0.5]), node_id=3)
    assert moved.node_id == 3 and np.array_equal(moved.states, pop.states)
    assert np.array_equal(pop.members(0), [0, 1])
