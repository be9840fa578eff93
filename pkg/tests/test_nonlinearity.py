import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import integrate, optimize

from annulus import nonlinearity as nl
from annulus.errors import DomainError, ResolutionError, StructureError
from annulus.nonlinearity import (check_conditions, custom, linear, parse_spec, power_diff, power_sum,
                                  pure_power)

exponents = st.tuples(st.floats(0.2, 8.0), st.floats(0.1, 6.0)).filter(lambda pq: pq[0] > pq[1] + 0.05)
families = st.sampled_from([power_sum, power_diff])


def ratio_prime_fd(spec, s, h=1e-5):
    """(F/f)' by central differences of F/f: independent of the F f'/f^2 identity."""
    g = lambda x: spec.F(x) / spec.f(x)
    return (g(s * (1 + h)) - g(s * (1 - h))) / (2 * s * h)


# --- eval -------------------------------------------------------------------

def test_eval_minus_at_one():
    f, fp, F = nl.eval(power_diff(3, 1), 1.0)
    assert f == 0.0 and fp == 2.0 and F == pytest.approx(-0.25, abs=1e-15)


def test_eval_plus_at_origin():
    assert nl.eval(power_sum(3, 1), 0.0) == (0.0, 1.0, 0.0)


def test_eval_minus_F_vanishes_at_beta():
    spec = power_diff(3, 1)
    beta = math.sqrt(2)
    quad, _ = integrate.quad(lambda t: t**3 - t, 0, beta, epsabs=1e-14)
    assert quad == pytest.approx(0.0, abs=1e-13)
    assert nl.eval(spec, beta)[2] == pytest.approx(0.0, abs=1e-14)


def test_eval_rejects_negative():
    with pytest.raises(DomainError):
        nl.eval(power_sum(3, 1), -1e-3)


def test_eval_unbounded_derivative_at_origin():
    assert nl.eval(power_sum(2, 0.5), 0.0)[1] == math.inf
    assert nl.eval(power_diff(2, 0.5), 0.0)[1] == -math.inf


@given(families, exponents, st.floats(1e-3, 50.0))
def test_F_is_antiderivative(fam, pq, s):
    spec = fam(*pq)
    ref, _ = integrate.quad(lambda t: float(spec.f(t)), 0, s, epsabs=1e-12, epsrel=1e-11, limit=200)
    assert float(spec.F(s)) == pytest.approx(ref, rel=1e-8, abs=1e-10)


@given(families, exponents, st.floats(0.05, 20.0))
def test_derivatives_by_central_differences(fam, pq, s):
    spec = fam(*pq)
    h = 1e-6 * s
    dF = (spec.F(s + h) - spec.F(s - h)) / (2 * h)
    df = (spec.f(s + h) - spec.f(s - h)) / (2 * h)
    scale_f = max(abs(float(spec.f(s))), s ** pq[0], s ** pq[1])
    scale_fp = max(abs(float(spec.fprime(s))), pq[0] * s ** (pq[0] - 1), pq[1] * s ** (pq[1] - 1))
    assert abs(dF - spec.f(s)) <= 1e-6 * scale_f
    assert abs(df - spec.fprime(s)) <= 1e-6 * scale_fp


def test_degenerate_exponents_rejected():
    with pytest.raises(DomainError):
        power_sum(2, 2)
    with pytest.raises(DomainError):
        power_diff(1, 3)
    with pytest.raises(DomainError):
        power_sum(2, 0)


# --- landmarks ----------------------------------------------------------------

def test_landmarks_plus():
    lm = power_sum(2, 1.5).landmarks
    assert (lm.B, lm.beta, lm.has_negative_part) == (0.0, 0.0, False)


@pytest.mark.parametrize("p,q,beta", [(3, 1, math.sqrt(2)), (2, 1, 1.5)])
def test_landmarks_minus_against_bisection(p, q, beta):
    lm = power_diff(p, q).landmarks
    oracle = optimize.bisect(lambda s: s ** (p + 1) / (p + 1) - s ** (q + 1) / (q + 1), 1.0, 10.0, xtol=1e-14)
    assert lm.B == 1.0
    assert lm.beta == pytest.approx(beta, abs=1e-14)
    assert lm.beta == pytest.approx(oracle, abs=1e-12)


@given(exponents)
def test_landmark_brackets_straddle(pq):
    spec = power_diff(*pq)
    lm = spec.landmarks
    lo, hi = lm.B_bracket
    assert spec.f(lo) < 0 < spec.f(hi) or spec.f(lo) * spec.f(hi) <= 0
    lo, hi = lm.beta_bracket
    assert spec.F(lo) * spec.F(hi) <= 0
    assert lm.beta > lm.B > 0


def test_custom_landmarks_by_root_finding():
    spec = custom(lambda s: np.asarray(s) ** 2 - 4.0, lambda s: 2 * np.asarray(s),
                  lambda s: np.asarray(s) ** 3 / 3 - 4 * np.asarray(s), label="s^2-4", check_points=[0.5, 3.0])
    lm = spec.landmarks
    assert lm.B == pytest.approx(2.0, abs=1e-12)
    assert lm.beta == pytest.approx(math.sqrt(12.0), abs=1e-12)


def test_custom_structure_error_names_clause():
    f = lambda s: np.sin(np.asarray(s))
    F = lambda s: 1 - np.cos(np.asarray(s))
    spec = custom(f, lambda s: np.cos(np.asarray(s)), F, label="sin")
    with pytest.raises(StructureError, match=r"\(f2\)"):
        spec.landmarks


def test_custom_rejects_wrong_antiderivative():
    with pytest.raises(DomainError):
        custom(lambda s: np.asarray(s), lambda s: np.ones_like(s), lambda s: np.asarray(s) ** 2, label="bad")


def test_parse_spec_round_trip():
    for text in ("plus:p=3,q=1", "minus:p=3,q=1", "minus:p=2.5,q=0.5"):
        assert parse_spec(text).label == text
    assert parse_spec("power:p=5").label == "power:p=5"
    for bad in ("plus:p=3", "cube:p=3,q=1", "plus:p=x,q=1", "plus:p3,q=1"):
        with pytest.raises(DomainError):
            parse_spec(bad)


# --- conditions ---------------------------------------------------------------

def test_plus_5_1_is_not_subcritical_everywhere():
    # (F/f)' at s = 1 is 1 - (2/3)(6)/4 = 0 < 1/6, so (f3) fails for s^5 + s
    spec = power_sum(5, 1)
    assert ratio_prime_fd(spec, 1.0) == pytest.approx(0.0, abs=1e-8)
    rep = check_conditions(spec, 3)
    assert rep["f3"].verdict == "fails" and rep["f3"].sampled_verdict == "fails"
    s = rep["f3"].witness_s
    assert ratio_prime_fd(spec, s) < 1 / 6
    grid = np.geomspace(0.01, 100, 20001)
    worst = grid[np.argmin(ratio_prime_fd(spec, grid))]
    assert s == pytest.approx(worst, rel=1e-3)


def test_plus_7_2_fails_f3():
    rep = check_conditions(power_sum(7, 2), 3)
    assert rep["f3"].verdict == "fails"
    assert ratio_prime_fd(power_sum(7, 2), rep["f3"].witness_s) < 1 / 6


def test_minus_3_1_holds():
    rep = check_conditions(power_diff(3, 1), 3)
    assert all(rep.holds(c) for c in ("f1", "f2", "f3", "f4"))


def test_coarse_grid_refused():
    with pytest.raises(ResolutionError):
        check_conditions(power_sum(3, 1), 3, grid=np.geomspace(1e-3, 1e3, 20))


@given(st.floats(0.3, 9.0), st.integers(3, 8))
def test_pure_power_f3_matches_critical_exponent(p, n):
    rep = check_conditions(pure_power(p), n, per_decade=64)
    assert rep.holds("f3") == (p <= (n + 2) / (n - 2))


@pytest.mark.parametrize("n", [3, 4, 6])
def test_pure_power_boundary_exponent(n):
    assert check_conditions(pure_power((n + 2) / (n - 2)), n).holds("f3")


@given(st.floats(1.0, 6.0), st.floats(0.0, 5.0))
def test_plus_f4_holds_for_q_at_least_one(q, dp):
    p = q + 0.01 + dp
    rep = check_conditions(power_sum(p, q), 3, per_decade=64)
    assert rep["f4"].verdict == "holds" and rep["f4"].sampled_verdict == "holds"


@given(families, exponents, st.integers(2, 7))
def test_closed_form_agrees_with_sampling(fam, pq, n):
    """Closed-form (f3) verdict versus a dense independent scan of (F/f)'."""
    spec = fam(*pq)
    rep = check_conditions(spec, n, per_decade=64)
    lo = max(spec.landmarks.beta, 1e-4) * (1 + 1e-6)
    s = np.geomspace(lo, 1e4, 40000)
    bound = 0.0 if n == 2 else (n - 2) / (2 * n)
    margin = spec.F_over_f_prime(s) - bound
    if rep["f3"].verdict == "holds":
        assert margin.min() > -1e-9
    elif margin.min() > 1e-9:
        # closed form sees a violation the finite window misses: it must lie outside it
        w = rep["f3"].witness_s
        assert w is not None and (w > 1e4 or w < lo)


def test_minus_f4_polynomial_identity():
    p, q = 3.5, 1.5
    spec = power_diff(p, q)
    s = np.linspace(1.01, 20, 200)
    lhs = spec.fprime(s) * (s - 1) - spec.f(s)
    assert np.allclose(lhs, s ** (q - 1) * nl.superlinearity_polynomial(p, q, s), rtol=1e-12)


def test_plus_f4_fails_for_small_q():
    rep = check_conditions(power_sum(2, 0.5), 3)
    assert rep["f4"].verdict == "fails"
    w = rep["f4"].witness_s
    spec = power_sum(2, 0.5)
    assert spec.fprime(w) * w < spec.f(w)


def test_report_json_fields():
    rows = check_conditions(power_diff(3, 1), 3).to_json()
    assert {"condition", "verdict", "witness_s", "method"} <= set(rows[0])
    assert [r["condition"] for r in rows] == ["f1", "f2", "f3", "f4"]


def test_linear_hook_spec():
    spec = linear()
    assert spec.landmarks.B == 0.0
    assert float(spec.f(2.0)) == pytest.approx(2 * math.pi**2)
