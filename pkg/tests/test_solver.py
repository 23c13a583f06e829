import math

import numpy as np
import pytest
from conftest import uniform_case
from hypothesis import given
from hypothesis import strategies as st

from growthlab.aggregation import derivative_checks, envelope_errors
from growthlab.econ import Forecasts
from growthlab.errors import ConsistencyError, DomainError
from growthlab.oracle import OracleSpec, brute_force_gamma
from growthlab.params import EconomyParams, SolverOptions
from growthlab.scenarios import branching_tree, no_employment_tree
from growthlab.solver import (BOUND_SLACK, Policy, foc_residual, gamma_lower_bound, gamma_upper_bound,
                              solve_gamma_at, solve_policy, utility, value_and_derivative)

OMEGAS = np.geomspace(1e-4, 1.0, 25)


def log_params(**kw):
    args = dict(alpha=0.36, beta=0.95, sigma=1.0, T=2)
    args.update(kw)
    return EconomyParams(**args)


def test_utility_forms():
    assert utility(np.e, 1.0) == pytest.approx(1.0)
    assert utility(1.0, 2.0) == 0.0
    assert utility(4.0, 0.5) == pytest.approx(2.0)


def test_last_period_saves_nothing():
    tree = no_employment_tree(1)
    params = log_params(T=1)
    pol, rep = solve_policy(tree, params, Forecasts((float("nan"),)))
    assert pol.is_terminal(0)
    assert np.all(pol.gamma_at(0, 0, OMEGAS) == 0.0)
    assert rep.passed


def test_log_no_employment_closed_form():
    tree = no_employment_tree(2)
    pol, _ = solve_policy(tree, log_params(), Forecasts.constant(tree, 0.3))
    g = pol.gamma_at(0, 0, OMEGAS)
    assert np.allclose(g, 0.95 / 1.95, atol=1e-12, rtol=0)
    assert g[0] == pytest.approx(0.4871795, abs=5e-8)


@pytest.mark.parametrize("sigma", [0.5, 2.0, 3.0])
def test_no_employment_rate_is_wealth_independent(sigma):
    tree = no_employment_tree(3, zs=(1.1, 0.9), probs=(0.4, 0.6))
    params = EconomyParams(alpha=0.36, beta=0.95, sigma=sigma, T=3)
    f = Forecasts.constant(tree, 0.3)
    pol, _ = solve_policy(tree, params, f)
    for (node, state), g in pol.gamma.items():
        assert np.ptp(g) <= 1e-12
        assert g[0] == pytest.approx(gamma_upper_bound(tree, f, params)[node], abs=1e-12)


def test_matches_brute_force_two_point_employment():
    tree = branching_tree(2, (1.0,), (1.0,), (0.0, 0.15), (0.1, 0.9))
    params = log_params()
    f = Forecasts.constant(tree, 0.3)
    pol, _ = solve_policy(tree, params, f)
    ref = brute_force_gamma(OracleSpec(tree), params, f, 0.2)[0]
    assert abs(pol.gamma_at(0, 0, 0.2) - ref) <= 1e-4


def test_report_and_residuals():
    tree, params, f = uniform_case(sigma=2.0, T=3)
    pol, rep = solve_policy(tree, params, f)
    assert rep.passed and rep.max_residual <= 1e-8
    d = rep.to_dict()
    assert all(entry["monotone"] for entry in d["nodes"].values())
    g = pol.gamma_at(0, 0, OMEGAS)
    raw = foc_residual(pol, 0, OMEGAS, g)
    lhs_scale = OMEGAS ** (1 - params.sigma) / (1 - g) ** params.sigma
    assert np.all(np.abs(raw) / lhs_scale <= 1e-6)


def test_residual_asymptotes_and_sign():
    tree, params, f = uniform_case(sigma=1.0, T=3)
    pol, _ = solve_policy(tree, params, f)
    w = 0.05
    assert foc_residual(pol, 0, w, 1.0) == math.inf
    assert foc_residual(pol, 0, w, 1.0 - 1e-12) > 1e6
    assert foc_residual(pol, 0, w, 0.0) == -math.inf
    assert foc_residual(pol, 0, w, 1e-12) < -1e6
    star = float(pol.gamma_at(0, 0, w))
    gammas = np.linspace(1e-9, 1 - 1e-9, 4001)
    r = foc_residual(pol, 0, np.full_like(gammas, w), gammas)
    assert np.all(r[gammas < star - 1e-6] < 0) and np.all(r[gammas > star + 1e-6] > 0)
    assert np.count_nonzero(np.diff(np.sign(r))) == 1


def test_terminal_has_no_foc():
    tree, params, f = uniform_case(T=2)
    pol, _ = solve_policy(tree, params, f)
    with pytest.raises(DomainError):
        foc_residual(pol, 1, 0.1, 0.5)
    with pytest.raises(DomainError):
        foc_residual(pol, 0, 0.0, 0.5)


def test_direct_solve_matches_table():
    tree, params, f = uniform_case(sigma=2.0, T=3)
    pol, _ = solve_policy(tree, params, f)
    grid = pol.grids[0]
    assert np.array_equal(solve_gamma_at(pol, 0, grid), pol.gamma[(0, 0)])
    mid = np.sqrt(grid[:-1] * grid[1:])
    assert np.max(np.abs(solve_gamma_at(pol, 0, mid) - pol.gamma_at(0, 0, mid))) <= 1e-7


@pytest.mark.parametrize("sigma", [0.5, 1.0, 2.0])
def test_terminal_value_derivative(sigma):
    tree, params, f = uniform_case(sigma=sigma, T=2, Y1=1.3)
    pol, _ = solve_policy(tree, params, f)
    Y = pol.econ.Y_eff[1]
    _, dv = value_and_derivative(pol, 1, OMEGAS)
    assert np.allclose(dv, Y ** (1 - sigma) / OMEGAS**sigma, rtol=1e-14)


@pytest.mark.parametrize("sigma", [0.5, 1.0, 2.0])
def test_envelope_and_concavity(sigma):
    tree, params, f = uniform_case(sigma=sigma, T=3)
    pol, _ = solve_policy(tree, params, f)
    x = pol.grids[0][1:-1]
    assert envelope_errors(pol, 0, x).max() <= 1e-5
    v, _ = value_and_derivative(pol, 0, x)
    second = np.diff(np.diff(v) / np.diff(x))
    assert np.all(second <= 0.0)
    with pytest.raises(DomainError):
        value_and_derivative(pol, 0, 0.0)


def test_upper_bound_log_closed_form():
    tree = no_employment_tree(3)
    params = log_params(beta=0.9, T=3)
    g = gamma_upper_bound(tree, Forecasts.constant(tree, 0.3), params)
    assert g[0] == pytest.approx(1 - 1 / 2.71, abs=1e-15)
    assert g[0] == pytest.approx(0.6309963, abs=5e-8)
    assert g[2] == 0.0


def test_upper_bound_crra_ratio_two():
    Om = 0.3
    z = 2.0 * Om ** (1 - 0.36)  # makes Y2 / (Omega Y1) = 2
    tree = branching_tree(2, (z,), (1.0,), (0.0,), (1.0,))
    params = EconomyParams(alpha=0.36, beta=0.9, sigma=2.0, T=2)
    f = Forecasts.constant(tree, Om)
    g = gamma_upper_bound(tree, f, params)[0]
    assert 1 / (1 - g) == pytest.approx(1 + math.sqrt(0.9 / 0.36 / 2.0), rel=1e-14)
    pol, _ = solve_policy(tree, params, f)
    assert np.max(np.abs(pol.gamma_at(0, 0, OMEGAS) - g)) <= 1e-10


def test_lower_bound_equals_upper_when_always_unemployed():
    tree = no_employment_tree(4, zs=(1.1, 0.9), probs=(0.5, 0.5))
    params = EconomyParams(alpha=0.36, beta=0.95, sigma=2.0, T=4)
    f = Forecasts.constant(tree, 0.3)
    up = gamma_upper_bound(tree, f, params)
    low, degenerate = gamma_lower_bound(tree, f, params)
    assert not degenerate
    for (node, _), v in low.items():
        assert v == pytest.approx(up[node], abs=1e-15)
    assert low[(tree.leaves()[0].id, 0)] == 0.0


def test_lower_bound_degenerates_without_unemployment():
    from growthlab.scenarios import representative_tree
    tree = representative_tree(3)
    low, degenerate = gamma_lower_bound(tree, Forecasts.constant(tree, 0.3), log_params(T=3))
    assert low[(0, 0)] == 0.0 and degenerate


@pytest.mark.parametrize("sigma", [0.5, 1.0, 2.0])
@pytest.mark.parametrize("T", [2, 4])
def test_sandwich_and_monotone(sigma, T):
    tree, params, f = uniform_case(sigma=sigma, T=T)
    pol, _ = solve_policy(tree, params, f)
    up = gamma_upper_bound(tree, f, params)
    low, _ = gamma_lower_bound(tree, f, params)
    for (node, state), g in pol.gamma.items():
        assert np.all(g >= low[(node, state)] - BOUND_SLACK) and np.all(g <= up[node] + BOUND_SLACK)
        assert np.all(g >= 0) and np.all(g < 1)
        assert np.all(np.diff(g) >= 0)
    assert derivative_checks(pol, 0).min_slope >= -1e-10


def test_log_scale_invariance():
    tables = []
    for Y1 in (0.5, 1.0, 2.0):
        tree, params, f = uniform_case(sigma=1.0, T=3, Y1=Y1)
        tables.append(solve_policy(tree, params, f)[0])
    for pol in tables[1:]:
        for key, g in pol.gamma.items():
            assert np.max(np.abs(g - tables[0].gamma[key])) <= 1e-10


def test_slope_product_is_stable_across_population_size():
    peaks = []
    for N in (10, 100, 1000):
        tree, params, f = uniform_case(sigma=2.0, T=3, N=N)
        pol, _ = solve_policy(tree, params, f)
        peaks.append(derivative_checks(pol, 0).max_omega_slope)
    assert max(peaks) / min(peaks) <= 1.1


def test_json_and_npz_round_trip(tmp_path):
    tree, params, f = uniform_case(sigma=2.0, T=3)
    pol, _ = solve_policy(tree, params, f, scenario_hash="abc")
    back = Policy.from_json(pol.to_json(), econ=pol.econ)
    pol.save_npz(tmp_path / "p.npz")
    binary = Policy.load_npz(tmp_path / "p.npz", econ=pol.econ)
    for other in (back, binary):
        for key in pol.gamma:
            assert np.array_equal(other.gamma[key], pol.gamma[key])
            assert np.array_equal(other.slopes[key], pol.slopes[key])
        assert np.array_equal(other.gamma_at(0, 0, OMEGAS), pol.gamma_at(0, 0, OMEGAS))
    assert binary.to_dict() == back.to_dict()
    with pytest.raises(ConsistencyError):
        Policy.from_dict(pol.to_dict(), pol.econ, scenario_hash="other")


def test_clamping_outside_grid():
    tree, params, f = uniform_case(T=2)
    pol, _ = solve_policy(tree, params, f, options=SolverOptions(n_grid=50))
    lo, hi = pol.grids[0][0], pol.grids[0][-1]
    assert pol.gamma_at(0, 0, lo / 10) == pol.gamma_at(0, 0, lo)
    assert pol.gamma_at(0, 0, hi * 10) == pol.gamma_at(0, 0, hi)
    assert pol.clamped(0, np.array([lo / 10, 0.5, hi * 10])).tolist() == [True, False, True]


@given(sigma=st.sampled_from([0.5, 1.0, 2.0, 4.0]), beta=st.floats(0.8, 0.99),
       u=st.floats(0.02, 0.5), Omega=st.floats(0.1, 0.6))
def test_solver_properties(sigma, beta, u, Omega):
    params = EconomyParams(alpha=0.36, beta=beta, sigma=sigma, T=3, N=20)
    from growthlab.scenarios import uniform_spec
    from growthlab.shocks import build_event_tree
    tree = build_event_tree(uniform_spec(u), params)
    f = Forecasts.constant(tree, Omega)
    pol, rep = solve_policy(tree, params, f, options=SolverOptions(n_grid=120))
    assert rep.passed
    up = gamma_upper_bound(tree, f, params)
    low, _ = gamma_lower_bound(tree, f, params)
    for (node, state), g in pol.gamma.items():
        assert np.all(np.diff(g) >= 0)
        assert np.all(g >= low[(node, state)] - BOUND_SLACK) and np.all(g <= up[node] + BOUND_SLACK)
