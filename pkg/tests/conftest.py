import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from growthlab.econ import Forecasts
from growthlab.params import EconomyParams
from growthlab.scenarios import uniform_spec
from growthlab.shocks import build_event_tree

settings.register_profile(
    "default", max_examples=40, deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("default")


def uniform_case(sigma=1.0, T=3, N=10, u=0.1, Omega=0.3, **kw):
    params = EconomyParams(alpha=0.36, beta=0.95, sigma=sigma, T=T, N=N, **kw)
    tree = build_event_tree(uniform_spec(u), params)
    return tree, params, Forecasts.constant(tree, Omega)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def record():
    """Log one acceptance verdict; the lines are echoed in the terminal summary."""

    def _record(criterion: int, passed: bool, detail: str) -> bool:
        ACCEPTANCE_LINES.append(f"criterion {criterion:2d}: {'PASS' if passed else 'FAIL'}  {detail}")
        return passed

    return _record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
