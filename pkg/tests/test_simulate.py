import csv

import numpy as np
import pytest
from conftest import uniform_case

from growthlab.auctioneer import solve_forecasts, solve_policies
from growthlab.econ import Forecasts
from growthlab.params import EconomyParams, PopulationOptions
from growthlab.population import initial_population
from growthlab.scenarios import representative_tree
from growthlab.simulate import simulate_paths, stream

AB = 0.36 * 0.95


def brock_mirman_rate(h):
    """Log-utility, full-depreciation savings rate with h periods remaining."""
    return AB * (1 - AB ** (h - 1)) / (1 - AB**h)


@pytest.fixture(scope="module")
def stochastic():
    tree, params, _ = uniform_case(sigma=2.0, T=3, N=10)
    pop = initial_population(tree, params, PopulationOptions("dirichlet", seed=1))
    f, rep = solve_forecasts(tree, params, pop)
    return tree, params, f, rep.policies, pop


@pytest.mark.parametrize("T", [2, 3, 4])
def test_representative_path(T):
    params = EconomyParams(alpha=0.36, beta=0.95, sigma=1.0, T=T, N=1)
    tree = representative_tree(T)
    pop = initial_population(tree, params)
    f, rep = solve_forecasts(tree, params, pop)
    panel = simulate_paths(tree, params, f, rep.policies, pop, n_paths=1)
    Y = [params.Y1]
    for t in range(T - 1):
        Omega = brock_mirman_rate(T - t)
        assert f[t] == pytest.approx(Omega, abs=1e-8)
        assert panel.c[0, t, 0] == pytest.approx((1 - Omega) * Y[-1], rel=1e-7)
        assert panel.s[0, t, 0] == pytest.approx(1.0, abs=1e-7)
        Y.append((Omega * Y[-1]) ** params.alpha)
    assert np.allclose(panel.Y[0], Y, rtol=1e-7)
    assert np.allclose(panel.omega[0, :, 0], 1.0)
    assert panel.c[0, -1, 0] == pytest.approx(Y[-1], rel=1e-7)


def test_same_seed_bit_identical(stochastic):
    tree, params, f, pols, pop = stochastic
    a = simulate_paths(tree, params, f, pols, pop, seed=11, n_paths=5)
    b = simulate_paths(tree, params, f, pols, pop, seed=11, n_paths=5)
    c = simulate_paths(tree, params, f, pols, pop, seed=12, n_paths=5)
    for name in ("nodes", "Y", "e", "omega", "s", "c", "investment"):
        assert np.array_equal(getattr(a, name), getattr(b, name), equal_nan=True)
    assert not np.array_equal(a.e, c.e)


def test_streams_are_keyed():
    x = stream(1, 2, 3).random(4)
    assert np.array_equal(x, stream(1, 2, 3).random(4))
    assert not np.array_equal(x, stream(1, 3, 2).random(4))


def test_accounting_identity(stochastic):
    tree, params, f, pols, pop = stochastic
    panel = simulate_paths(tree, params, f, pols, pop, seed=3, n_paths=8)
    assert np.abs(panel.accounting_residuals()).max() <= 1e-10
    # wealth shares sum to one at the root, so consumption plus investment is output
    root = panel.c[:, 0].sum(axis=1) + panel.investment[:, 0]
    assert np.allclose(root, panel.Y[:, 0], atol=1e-10, rtol=0)
    assert np.allclose(panel.e.sum(axis=2), 1.0, atol=1e-12)


def test_representative_goods_market_clears():
    params = EconomyParams(alpha=0.36, beta=0.95, sigma=1.0, T=4, N=1)
    tree = representative_tree(4)
    pop = initial_population(tree, params)
    f, rep = solve_forecasts(tree, params, pop)
    panel = simulate_paths(tree, params, f, rep.policies, pop, n_paths=1)
    total = panel.c.sum(axis=2) + panel.investment
    assert np.allclose(total, panel.Y, atol=1e-8, rtol=0)


def test_single_period_consumes_everything():
    tree, params, _ = uniform_case(T=1, N=10)
    f = Forecasts((float("nan"),))
    pop = initial_population(tree, params, PopulationOptions("dirichlet", seed=2))
    pols = solve_policies(tree, params, f, pop)
    panel = simulate_paths(tree, params, f, pols, pop, n_paths=2)
    assert np.all(panel.s == 0.0)
    assert np.allclose(panel.c[:, 0], pop.omega * params.Y1, atol=0, rtol=1e-15)


def test_clamped_wealth_is_counted(stochastic):
    tree, params, f, pols, pop = stochastic
    poor = pop.omega.copy()
    poor[0] = 1e-12
    panel = simulate_paths(tree, params, f, pols, pop.with_omega(poor), n_paths=1)
    assert panel.clamped >= 1


def test_independent_mode(stochastic):
    tree, params, f, pols, pop = stochastic
    panel = simulate_paths(tree, params, f, pols, pop, seed=4, n_paths=4, mode="independent")
    assert np.allclose(panel.e.sum(axis=2), 1.0, atol=1e-12)


def test_csv(stochastic, tmp_path):
    tree, params, f, pols, pop = stochastic
    panel = simulate_paths(tree, params, f, pols, pop, n_paths=2, scenario_hash="abc")
    panel.write_csv(tmp_path / "panel.csv")
    with open(tmp_path / "panel.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 2 * tree.T * pop.N
    assert rows[0]["scenario"] == "abc"
    assert float(rows[0]["omega"]) == pop.omega[0]

