import functools
import math

import pytest
from hypothesis import HealthCheck, settings

from annulus.nonlinearity import power_diff, power_sum
from annulus.radial_ode import RadialProblem, integrate
from annulus import shooting

settings.register_profile("default", deadline=None, max_examples=25,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

# lines recorded by tests/test_acceptance.py, echoed in the terminal summary
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@functools.lru_cache(maxsize=None)
def annulus_solution(n, a, b, family, p, q):
    spec = power_sum(p, q) if family == "plus" else power_diff(p, q)
    result = shooting.solve_annulus(RadialProblem(n, a, b, spec))
    return result


@functools.lru_cache(maxsize=None)
def exterior_solution(n, p, q, r_max=50.0):
    return shooting.solve_exterior(RadialProblem(n, 1.0, math.inf, power_diff(p, q)), r_max=r_max)


@functools.lru_cache(maxsize=None)
def trajectory(n, a, family, p, q, alpha, b=math.inf):
    spec = power_sum(p, q) if family == "plus" else power_diff(p, q)
    if math.isinf(b) and family == "plus":
        b = 50.0
    return integrate(RadialProblem(n, a, b, spec), alpha)


@pytest.fixture(scope="session")
def plus31_solution():
    res = annulus_solution(3, 1.0, 2.0, "plus", 3.0, 1.0)
    assert res.count == 1
    return res.solutions[0].profile
