"""Acceptance criteria, one PASS/FAIL line each, echoed in the pytest summary."""

import itertools
import math
import time

import numpy as np
import pytest

from annulus import functionals as fn
from annulus import regions as rg
from annulus import shooting as sh
from annulus.nonlinearity import linear, power_diff, power_sum
from annulus.radial_ode import RadialProblem, Termination, energy_trace, integrate

import conftest
from conftest import annulus_solution, exterior_solution, trajectory
from test_regions import GOLDEN


def record(criterion, ok, detail):
    conftest.ACCEPTANCE_LINES.append(f"[{'PASS' if ok else 'FAIL'}] criterion {criterion}: {detail}")
    print(conftest.ACCEPTANCE_LINES[-1])
    assert ok, detail


def test_1_linear_oracle():
    t0 = time.perf_counter()
    prof = integrate(RadialProblem(3, 1.0, 2.5, linear()), math.pi)
    elapsed = time.perf_counter() - t0
    r = np.linspace(1, 2, 2001)
    err = float(np.max(np.abs(prof(r)[0] - np.sin(math.pi * (r - 1)) / r)))
    zero_err = abs(prof.events.zero - 2.0)
    ok = err <= 1e-8 and zero_err <= 1e-8 and elapsed < 1.0
    record(1, ok, f"max|u - sin(pi(r-1))/r| = {err:.2e} (<= 1e-8), |zero - 2| = {zero_err:.2e} (<= 1e-8), "
                  f"runtime {elapsed:.3f} s (< 1 s)")


def _energy_cases():
    alphas = {2: (0.5, 3.0, 12.0), 3: (0.5, 3.0, 12.0, 40.0), 6: (1.0, 5.0, 30.0)}
    fams = (("plus", 3.0, 1.0), ("minus", 3.0, 1.0))
    cases = [(fam, n, a) for fam in fams for n in (2, 3, 6) for a in alphas[n]]
    return cases[:20]


def test_2_energy_law():
    cases = _energy_cases()
    assert len(cases) == 20
    worst_jump, worst_dev = -math.inf, 0.0
    ok = True
    for (fam, p, q), n, alpha in cases:
        prof = trajectory(n, 1.0, fam, p, q, alpha, 30.0 if fam == "plus" else math.inf)
        tr = energy_trace(prof)
        ok &= tr.max_jump <= tr.jump_tolerance and tr.max_rel_dev <= 1e-4
        worst_jump = max(worst_jump, tr.max_jump / tr.jump_tolerance)
        worst_dev = max(worst_dev, tr.max_rel_dev)
    record(2, ok, f"20 trajectories (plus/minus, n in 2,3,6): worst I jump / (10 x tol) = {worst_jump:.2e} "
                  f"(<= 1), worst |dI/dr fd - (-2(n-1)u'^2/r)| rel = {worst_dev:.2e} (<= 1e-4)")


def test_3_shape_law():
    hit, worst = 0, math.inf
    ok = True
    for (fam, p, q), n, alpha in itertools.product((("plus", 3.0, 1.0), ("plus", 2.0, 0.5), ("minus", 3.0, 1.0),
                                                    ("minus", 3.0, 2.0)), (2, 3, 6),
                                                   np.geomspace(0.2, 80.0, 8)):
        prof = trajectory(n, 1.0, fam, p, q, float(alpha), 30.0 if fam == "plus" else math.inf)
        if prof.termination is not Termination.HIT_ZERO:
            continue
        hit += 1
        beta = prof.problem.spec.landmarks.beta
        margin = prof.events.peak[1] - beta
        worst = min(worst, margin)
        ok &= len(prof.events.peaks) == 1 and margin > 1e-6 and prof.check_shape() == []
    ok &= hit >= 40
    record(3, ok, f"{hit} HitZero trajectories: exactly one peak each, min u(c) - beta = {worst:.3e} (> 1e-6)")


CASES_4 = [(3, 1.0, 2.0, 3.0, 1.0), (3, 1.0, 3.0, 3.0, 1.0), (3, 0.5, 1.5, 3.0, 1.0), (6, 1.0, 2.0, 2.0, 1.0),
           (2, 1.0, 2.0, 3.0, 1.0)]


@pytest.mark.parametrize("n,a,b,p,q", CASES_4)
def test_4_uniqueness_counts(n, a, b, p, q):
    assert rg.classify_plus(n, p, q).unique
    t0 = time.perf_counter()
    res = sh.solve_annulus(RadialProblem(n, a, b, power_sum(p, q)), grid=512)
    elapsed = time.perf_counter() - t0
    doubled = sh.solve_annulus(RadialProblem(n, a, b, power_sum(p, q)), grid=1024)
    resid = max((s.residual for s in res.solutions), default=math.nan)
    ok = res.count == 1 and doubled.count == 1 and elapsed < 30 and resid <= 1e-8
    record(4, ok, f"n={n} plus p={p:g} q={q:g} on ({a:g},{b:g}): count {res.count} (512 pts, {elapsed:.1f} s < 30 s), "
                  f"count {doubled.count} at 1024 pts, alpha* = {res.alphas}, |u(b)| = {resid:.1e}")


@pytest.mark.parametrize("n,p,q", [
    (3, 3.0, 1.0),
    pytest.param(2, 3.0, 2.0, marks=pytest.mark.xfail(strict=True, reason=(
        "the n=2, q=2 ground state decays algebraically (u ~ 4/r^2), so |r u'| ~ 8/r^2 exceeds 1e-3 at r = 50"))),
])
def test_5_exterior_ground_state(n, p, q):
    res = exterior_solution(n, p, q, 50.0)
    sol = res.solutions[0]
    t = sol.tail
    assert rg.classify_minus(n, p, q).unique
    ok = (res.count == 1 and sol.residual < 1e-12 and t is not None and abs(t.ru_prime_tail) < 1e-3
          and t.flux_monotone and t.r_end == pytest.approx(50.0))
    record(5, ok, f"n={n} minus p={p:g} q={q:g}: alpha* = {sol.alpha_star!r}, bracket width {sol.residual:.1e} "
                  f"(< 1e-12), |r u'(50)| = {abs(t.ru_prime_tail):.2e} (< 1e-3), "
                  f"r^(n-1)u' monotone on tail: {t.flux_monotone}")


def test_6_functional_identities(plus31_solution):
    br = fn.invert_branches(plus31_solution)
    rep = fn.derivative_identity_check(br, plus31_solution.problem.spec, 3, window=(0.1, 0.9))
    ok = rep.V_max_rel_dev <= 1e-4 and rep.P_max_rel_dev <= 1e-4 and rep.peak_limit_rel_dev <= 1e-6
    record(6, ok, f"V' rel dev {rep.V_max_rel_dev:.1e}, P' rel dev {rep.P_max_rel_dev:.1e} (<= 1e-4 on "
                  f"[0.1M, 0.9M]); P(M) vs -2c^nF(M) rel dev {rep.peak_limit_rel_dev:.1e} (<= 1e-6)")


@pytest.mark.parametrize("fam", ["plus", "minus"])
def test_7_pairwise_steps(fam):
    b = 20.0 if fam == "plus" else math.inf
    p1 = trajectory(3, 1.0, fam, 3.0, 1.0, 1.0, b)
    p2 = trajectory(3, 1.0, fam, 3.0, 1.0, 2.0, b)
    rep = fn.compare_pair(p1, p2, grid=512)
    s2, s3 = rep.steps["step2"], rep.steps["step3"]
    beta = p1.problem.spec.landmarks.beta
    if s2.status == "vacuous":
        w_note = (f"(beta, M1) = ({beta:.4f}, {rep.M1:.4f}) is empty so w < 0 holds vacuously "
                  f"[surrogate max w on (0, M1) = {s2.detail['surrogate_w_max_on_0_M1']:.3f}]")
    else:
        w_note = f"max w on 512 pts of (beta, M1) = {s2.detail['w_max']:.3e} (< 0)"
    ok = rep.M1 < rep.M2 and bool(s2.holds) and bool(s3.holds)
    record(7, ok, f"{fam} p=3 q=1 alphas (1, 2): M1 = {rep.M1:.4f} < M2 = {rep.M2:.4f}; {w_note}; "
                  f"P1(M1) - P2(M1) = {s3.margin:.3e} (> 0)")


def test_8_region_algebra():
    t0 = time.perf_counter()
    ident = max(abs(rg.P_upper(n, 4 / (n - 2)) - (n + 2) / (n - 2)) for n in (3, 4, 5))
    p31 = abs(rg.P_upper(3, 1) - (4 + math.sqrt(40)) / 3)
    mono = True
    for n in (3, 4, 5):
        q = np.linspace(0.01, rg.critical_exponent(n) - 1e-3, 2001)
        P = np.array([rg.P_upper(n, x) for x in q])
        mid = 0.5 * (q[1:] + q[:-1])
        d = np.diff(P)
        turn = 4 / (n - 2)
        mono &= bool(np.all(d[mid < turn - 0.01] > 0) and np.all(d[mid > turn + 0.01] < 0))
    golden = sum((rg.classify(f, n, p, q).verdict, rg.classify(f, n, p, q).label) == (v, lab)
                 for f, n, p, q, v, lab in GOLDEN)
    elapsed = time.perf_counter() - t0
    ok = ident <= 1e-14 and p31 <= 1e-14 and mono and golden == len(GOLDEN) == 30 and elapsed < 1.0
    record(8, ok, f"|P(4/(n-2)) - (n+2)/(n-2)| = {ident:.1e}, |P(3,1) - (4+sqrt40)/3| = {p31:.1e} (<= 1e-14); "
                  f"monotone on both intervals: {mono}; golden table {golden}/30; runtime {elapsed:.3f} s (< 1 s)")


def test_9_multiplicity_regime_capability():
    # s^7 + s^2 in dimension 3 with a thin inner hole; b sits between a fold minimum and maximum of b(alpha)
    prob = RadialProblem(3, 0.01, 4.5, power_sum(7, 2))
    res = sh.solve_annulus(prob, alpha_min=1e-1, alpha_max=1e4, grid=512)
    m = np.array([p.mismatch for p in res.scan])
    m = m[np.isfinite(m)]
    sign_changes = int(np.count_nonzero(np.sign(m[1:]) * np.sign(m[:-1]) < 0))
    ok = res.count == sign_changes and all(s.residual <= 1e-8 for s in res.solutions)
    record(9, ok, f"n=3 plus s^7 + s^2 on (0.01, 4.5): {res.count} solutions, {sign_changes} sign changes "
                  f"(must agree; no uniqueness asserted), alpha* = {[round(a, 4) for a in res.alphas]}")
