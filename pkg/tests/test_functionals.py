import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from annulus import functionals as fn
from annulus.errors import DataError, DomainError, StateError, WindowError
from annulus.nonlinearity import check_conditions, linear, power_diff, power_sum
from annulus.radial_ode import RadialProblem, integrate

from conftest import exterior_solution, trajectory


# --- branch inversion -----------------------------------------------------------

def test_roundtrip_on_solution(plus31_solution):
    br = fn.invert_branches(plus31_solution)
    s = np.linspace(0.0, br.M, 301)
    for branch in (br.rising, br.falling):
        r = branch.r(s)
        assert np.max(np.abs(plus31_solution.dense(r)[0] - s)) < 1e-10
    assert br.r(0.0) == pytest.approx(1.0, abs=1e-14)
    assert br.rbar(0.0) == pytest.approx(2.0, abs=1e-8)
    assert br.r(br.M) == pytest.approx(br.c, abs=1e-12)
    assert br.rbar(br.M) == pytest.approx(br.c, abs=1e-12)
    assert br.falling_end == "zero"


def test_linear_hook_branches_against_closed_form():
    prof = integrate(RadialProblem(3, 1.0, 2.5, linear()), math.pi)
    br = fn.invert_branches(prof)
    s = np.linspace(0.01, 0.99 * br.M, 50)
    r = br.r(s)
    assert np.max(np.abs(np.sin(math.pi * (r - 1)) / r - s)) < 1e-8


def test_branch_outside_support_raises(plus31_solution):
    br = fn.invert_branches(plus31_solution)
    with pytest.raises(DomainError):
        br.r(br.M * 1.01)
    with pytest.raises(DomainError):
        br.r(-0.1)


def test_inversion_needs_a_peak():
    prof = integrate(RadialProblem(3, 1.0, 2.0, power_sum(3, 1)), 1.0, r_end=1.001)
    with pytest.raises(StateError):
        fn.invert_branches(prof)


def test_branch_slopes_are_reciprocal(plus31_solution):
    br = fn.invert_branches(plus31_solution)
    s = np.linspace(0.1, 0.9, 20) * br.M
    assert np.allclose(br.rising.uprime(s) * br.rising.rprime(s), 1.0, rtol=1e-10)


@given(st.floats(0.5, 40.0))
def test_roundtrip_property(alpha):
    prof = trajectory(3, 1.0, "plus", 3.0, 1.0, alpha, 20.0)
    br = fn.invert_branches(prof)
    s = np.linspace(0, br.M, 64)
    assert np.max(np.abs(prof.dense(br.r(s))[0] - s)) <= 1e-9 * max(1.0, br.M)
    sf = s[s >= br.falling.s_lo]
    assert np.max(np.abs(prof.dense(br.rbar(sf))[0] - sf)) <= 1e-9 * max(1.0, br.M)


# --- functionals on one profile ------------------------------------------------

def test_V_at_zero_and_peak(plus31_solution):
    br = fn.invert_branches(plus31_solution)
    spec = plus31_solution.problem.spec
    tr = fn.eval_functionals(br, spec, 3)
    alpha = plus31_solution.alpha
    assert tr.V[-1] == pytest.approx(alpha**2, rel=1e-10)  # a = 1
    assert tr.P[0] == tr.Pbar[0] == pytest.approx(-2 * br.c**3 * float(spec.F(br.M)), rel=1e-14)
    assert not tr.truncated and tr.guard_excluded == 0


def test_W_is_r_times_sqrt_energy(plus31_solution):
    br = fn.invert_branches(plus31_solution)
    spec = plus31_solution.problem.spec
    s = np.linspace(0.2, 0.8, 7) * br.M
    vals = fn.functional_values(br.falling, spec, 3, s)
    u, v = plus31_solution.dense(vals["r"])
    assert np.allclose(vals["W"], vals["r"] * np.sqrt(v**2 + 2 * spec.F(u)), rtol=1e-12)


def test_identities_on_plus_solution(plus31_solution):
    br = fn.invert_branches(plus31_solution)
    spec = plus31_solution.problem.spec
    f3 = check_conditions(spec, 3).holds("f3")
    rep = fn.derivative_identity_check(br, spec, 3, f3_holds=f3)
    assert rep.V_max_rel_dev <= 1e-4
    assert rep.P_max_rel_dev <= 1e-4
    assert rep.Pbar_max_rel_dev <= 1e-4
    assert rep.peak_limit_rel_dev <= 1e-6
    assert rep.P_sign_ok and rep.Pbar_sign_ok


def test_identities_on_minus_trajectory_below_B():
    prof = trajectory(3, 1.0, "minus", 3.0, 1.0, 6.0)
    br = fn.invert_branches(prof)
    spec = prof.problem.spec
    rep = fn.derivative_identity_check(br, spec, 3, window=(0.05, 0.9 * 1.0 / br.M))
    assert rep.V_max_rel_dev <= 1e-4 and rep.P_max_rel_dev <= 1e-4


def test_window_touching_B_is_rejected():
    prof = trajectory(3, 1.0, "minus", 3.0, 1.0, 6.0)
    br = fn.invert_branches(prof)
    with pytest.raises(WindowError):
        fn.derivative_identity_check(br, prof.problem.spec, 3, window=(0.1, 0.9))
    with pytest.raises(WindowError):
        fn.derivative_identity_check(br, prof.problem.spec, 3, window=(0.9, 0.1))


def test_P_formula_by_direct_radial_differentiation(plus31_solution):
    """dP/ds = (dP/dr) / u'(r), with dP/dr from the dense output alone."""
    br = fn.invert_branches(plus31_solution)
    spec = plus31_solution.problem.spec
    n = 3
    s = np.linspace(0.2, 0.8, 9) * br.M
    r = br.r(s)
    h = 1e-5

    def P_of_r(x):
        u, v = plus31_solution.dense(x)
        ratio = spec.F(u) / spec.f(u)
        return -2 * n * ratio * x ** (n - 1) * v - x**n * v**2 - 2 * x**n * spec.F(u)

    dPdr = (P_of_r(r + h) - P_of_r(r - h)) / (2 * h)
    v = plus31_solution.dense(r)[1]
    formula = fn.functional_values(br.rising, spec, n, s)["P_prime"]
    assert np.allclose(dPdr / v, formula, rtol=1e-5)


def test_richardson_is_exact_on_cubics():
    x = np.linspace(-2, 2, 9)
    d = fn.richardson_derivative(lambda t: t**3 - 2 * t, x, 0.1)
    assert np.allclose(d, 3 * x**2 - 2, atol=1e-12)


# --- pairs ---------------------------------------------------------------------

def test_plus_pair_steps():
    p1 = trajectory(3, 1.0, "plus", 3.0, 1.0, 1.0, 20.0)
    p2 = trajectory(3, 1.0, "plus", 3.0, 1.0, 2.0, 20.0)
    rep = fn.compare_pair(p1, p2)
    assert rep.M1 < rep.M2
    assert rep.premise_class == "ivp-trajectory-pair"
    assert rep.steps["step1"].status == "trivially true"
    assert rep.steps["step2"].holds and rep.steps["step2"].detail["grid"] == 512
    assert rep.steps["step2"].detail["w_max"] < 0
    assert rep.steps["step3"].holds
    d = rep.to_dict()
    assert set(d["steps"]) == {"step1", "step2", "step3", "step4", "step5", "step6"}


def test_plus_pair_flux_oracle():
    """w = r1^(n-1) u1' - r2^(n-1) u2' < 0, evaluated straight from the profiles."""
    p1 = trajectory(3, 1.0, "plus", 3.0, 1.0, 1.0, 20.0)
    p2 = trajectory(3, 1.0, "plus", 3.0, 1.0, 2.0, 20.0)
    M1 = p1.events.peak[1]
    s = np.linspace(0, M1, 102)[1:-1]
    w = []
    for x in s:
        r1 = p1.dense.r_min + _first_crossing(p1, x)
        r2 = p2.dense.r_min + _first_crossing(p2, x)
        w.append(r1**2 * p1.dense(r1)[1] - r2**2 * p2.dense(r2)[1])
    assert max(w) < 0


def _first_crossing(prof, level):
    from scipy.optimize import brentq
    c = prof.events.peak[0]
    return brentq(lambda r: prof.dense(r)[0] - level, prof.dense.r_min, c, xtol=1e-14) - prof.dense.r_min


def test_minus_pair_peaks_below_beta():
    p1 = trajectory(3, 1.0, "minus", 3.0, 1.0, 1.0)
    p2 = trajectory(3, 1.0, "minus", 3.0, 1.0, 2.0)
    rep = fn.compare_pair(p1, p2)
    assert rep.M1 < rep.M2 < math.sqrt(2)
    assert rep.steps["step1"].status == "not evaluable"
    assert rep.steps["step2"].status == "vacuous"
    assert rep.steps["step3"].holds


def test_exterior_pair_j_trace():
    p1 = trajectory(3, 1.0, "minus", 3.0, 1.0, 5.0)
    p2 = trajectory(3, 1.0, "minus", 3.0, 1.0, 6.0)
    rep = fn.compare_pair(p1, p2, mode="exterior")
    for key in ("step2", "step3"):
        assert rep.steps[key].holds
    j = rep.steps["exterior"]
    assert j.holds in (True, None)


def test_compare_pair_validation():
    p1 = trajectory(3, 1.0, "plus", 3.0, 1.0, 1.0, 20.0)
    p2 = trajectory(3, 1.0, "plus", 3.0, 1.0, 2.0, 20.0)
    with pytest.raises(DomainError):
        fn.compare_pair(p2, p1)
    with pytest.raises(DomainError):
        fn.compare_pair(p1, p2, mode="sideways")
    other = trajectory(3, 1.0, "minus", 3.0, 1.0, 2.0)
    with pytest.raises(DomainError):
        fn.compare_pair(p1, other)


def test_find_intersections_on_crossing_branches():
    p1 = trajectory(3, 1.0, "plus", 3.0, 1.0, 1.0, 20.0)
    p2 = trajectory(3, 1.0, "plus", 3.0, 1.0, 2.0, 20.0)
    b1, b2 = fn.invert_branches(p1), fn.invert_branches(p2)
    roots = fn.find_intersections(b1.falling, b2.falling, 0.0, b1.M)
    for x in roots:
        assert b1.rbar(x) == pytest.approx(b2.rbar(x), abs=1e-9)
    assert roots == sorted(roots, reverse=True)


def test_premise_class_for_decaying_pair():
    g = exterior_solution(3, 3.0, 1.0).solutions[0].profile
    p = trajectory(3, 1.0, "minus", 3.0, 1.0, 0.5)
    assert fn.premise_class(g, g) == "decaying-pair"
    assert fn.premise_class(p, g) == "ivp-trajectory-pair"


def test_nonmonotone_branch_is_data_error():
    prof = integrate(RadialProblem(3, 1.0, 30.0, power_sum(3, 1)), 2.0, stop_on_zero=False)
    # the profile oscillates past its zero, so the falling nodes are not monotone once the
    # zero event is ignored
    from dataclasses import replace
    broken = replace(prof, events=replace(prof.events, zero=None, troughs=[]))
    with pytest.raises(DataError):
        fn.invert_branches(broken)
