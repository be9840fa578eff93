"""Shooting in the initial slope alpha = u'(a).

Finite annuli are solved by scanning a signed boundary mismatch over a
geometric alpha grid and refining each sign change with Brent's method.
Exterior problems are solved by bisecting between trajectories that cross
zero and trajectories that bounce back up before reaching it.
"""

from __future__ import annotations

import math
import os
import pickle
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Optional, Union

import numpy as np
from scipy import optimize

from .errors import AnnulusError, BracketError, DomainError, StateError
from .radial_ode import (DEFAULT_CONTROLS, IntegratorControls, RadialProblem, SolutionProfile,
                         TailDiagnostics, Termination, extend, integrate, tail_diagnostics, truncate)

ALPHA_XTOL = 1e-12
CONTINUUM_RESIDUAL = 1e-9
CONTINUUM_FRACTION = 0.9
# relative agreement required between the two sides of a separatrix bracket
SEPARATRIX_AGREEMENT = 1e-6

NO_ZERO = "NoZeroBeforeRmax"
BOUNCED = "Bounced"
DIVERGED = "Diverged"
CROSSING = "Crossing"
BOUNCING = "Bouncing"
UNDECIDED = "Undecided"


class ContinuumFlag(AnnulusError):
    """Every scanned alpha solves the problem (e.g. a linear nonlinearity)."""

    exit_code = 0

    def __init__(self, result: "ShootingResult"):
        super().__init__(f"boundary residual below {CONTINUUM_RESIDUAL:g} on more than "
                         f"{CONTINUUM_FRACTION:.0%} of the scan; solutions form a continuum")
        self.result = result


@dataclass(frozen=True)
class ScanPoint:
    alpha: float
    b_of_alpha: float  # first zero radius, nan when none was found
    classification: str  # HitZero / NoZeroBeforeRmax / Bounced / Diverged
    u_at_b: float  # u(b) when u > 0 on (a, b], nan otherwise
    mismatch: float  # signed residual whose roots are positive solutions


@dataclass(frozen=True, eq=False)
class Solution:
    alpha_star: float
    profile: SolutionProfile
    bracket: tuple[float, float]
    residual: float  # |u(b)| (finite) or bracket width (exterior)
    tail: Optional[TailDiagnostics] = None
    accepted: bool = True


@dataclass(eq=False)
class ShootingResult:
    problem: RadialProblem
    solutions: list[Solution]
    scan: list = field(default_factory=list)
    brackets_used: list[tuple[float, float]] = field(default_factory=list)
    alpha_range: tuple[float, float] = (0.0, 0.0)
    continuum: bool = False
    history: list = field(default_factory=list)  # exterior bisection trail

    @property
    def count(self) -> int:
        return len(self.solutions)

    @property
    def alphas(self) -> list[float]:
        return [s.alpha_star for s in self.solutions]


# ---------------------------------------------------------------------------
# finite annulus


def first_zero_map(problem: RadialProblem, alpha: float,
                   controls: IntegratorControls = DEFAULT_CONTROLS) -> Union[float, str]:
    """Radius of the first zero of u, or the reason there is none."""
    prof = integrate(problem, alpha, controls)
    return _classify_first_zero(prof)


def _classify_first_zero(prof: SolutionProfile) -> Union[float, str]:
    if prof.termination is Termination.HIT_ZERO:
        return float(prof.events.zero)
    if prof.termination is Termination.BOUNCED or prof.events.bounce is not None:
        return BOUNCED
    if prof.termination is Termination.DIVERGED:
        return DIVERGED
    return NO_ZERO


def mismatch(problem: RadialProblem, alpha: float,
             controls: IntegratorControls = DEFAULT_CONTROLS) -> tuple[float, SolutionProfile]:
    """Signed boundary residual at r = b.

    u(b) when u stays positive on (a, b]; otherwise -|u'(z)| (b - z) with z the
    first zero.  Both branches vanish together when z -> b, so the map is
    continuous in alpha and its roots are exactly the positive solutions.
    """
    if problem.exterior:
        raise DomainError("the boundary mismatch needs a finite outer radius")
    prof = integrate(problem, alpha, controls, r_end=problem.b, stop_on_bounce=False)
    if prof.termination is Termination.HIT_ZERO:
        z = prof.events.zero
        return -abs(float(prof.v[-1])) * (problem.b - z), prof
    if prof.termination is Termination.DIVERGED:
        return math.nan, prof
    return float(prof.u[-1]), prof


def _scan_point(problem: RadialProblem, alpha: float, controls: IntegratorControls) -> ScanPoint:
    m, prof = mismatch(problem, alpha, controls)
    if prof.termination is Termination.HIT_ZERO:
        return ScanPoint(alpha, float(prof.events.zero), Termination.HIT_ZERO.value, math.nan, m)
    if prof.termination is Termination.DIVERGED:
        return ScanPoint(alpha, math.nan, DIVERGED, math.nan, m)
    u_b = float(prof.u[-1])
    if prof.events.bounce is not None:
        return ScanPoint(alpha, math.nan, BOUNCED, u_b, m)
    cap = controls.r_cap(problem)
    tail = extend(prof, cap) if cap > problem.b else prof
    cls = _classify_first_zero(tail)
    if isinstance(cls, float):
        return ScanPoint(alpha, cls, Termination.HIT_ZERO.value, u_b, m)
    return ScanPoint(alpha, math.nan, cls, u_b, m)


def default_workers() -> int:
    try:
        return max(1, int(os.environ.get("ANNULUS_THREADS", "1")))
    except ValueError:
        return 1


def _picklable(obj) -> bool:
    try:
        pickle.dumps(obj)
        return True
    except Exception:
        return False


def scan(problem: RadialProblem, alphas, controls: IntegratorControls = DEFAULT_CONTROLS,
         workers: int = 1) -> list[ScanPoint]:
    alphas = [float(a) for a in alphas]
    if workers > 1 and len(alphas) > 1 and _picklable(problem):
        with ProcessPoolExecutor(max_workers=workers) as pool:
            points = list(pool.map(_scan_point, [problem] * len(alphas), alphas,
                                   [controls] * len(alphas), chunksize=max(1, len(alphas) // (4 * workers))))
    else:
        points = [_scan_point(problem, a, controls) for a in alphas]
    return sorted(points, key=lambda p: p.alpha)


def _check_range(alpha_min, alpha_max, grid):
    if not (0 < alpha_min < alpha_max and math.isfinite(alpha_max)):
        raise DomainError(f"alpha range must satisfy 0 < alpha_min < alpha_max, got [{alpha_min}, {alpha_max}]")
    if int(grid) != grid or grid < 2:
        raise DomainError(f"grid size must be an integer >= 2, got {grid}")


def _sign_brackets(points: list[ScanPoint]) -> list[tuple[float, float]]:
    brackets = []
    for lo, hi in zip(points, points[1:]):
        if not (math.isfinite(lo.mismatch) and math.isfinite(hi.mismatch)):
            continue
        if lo.mismatch == 0.0:
            brackets.append((lo.alpha, lo.alpha))
        elif lo.mismatch * hi.mismatch < 0:
            brackets.append((lo.alpha, hi.alpha))
    if points and points[-1].mismatch == 0.0:
        brackets.append((points[-1].alpha, points[-1].alpha))
    return brackets


def solve_annulus(problem: RadialProblem, controls: IntegratorControls = DEFAULT_CONTROLS, *,
                  alpha_min: float = 1e-3, alpha_max: float = 1e3, grid: int = 512,
                  xtol: float = ALPHA_XTOL, workers: int = 1) -> ShootingResult:
    """All positive solutions whose initial slope lies in [alpha_min, alpha_max].

    The count is relative to the declared alpha range; solutions outside it
    are not searched for.
    """
    if problem.exterior:
        raise DomainError("solve_annulus needs a finite outer radius; use solve_exterior")
    _check_range(alpha_min, alpha_max, grid)
    alphas = np.geomspace(alpha_min, alpha_max, int(grid))
    points = scan(problem, alphas, controls, workers)
    result = ShootingResult(problem, [], points, [], (alpha_min, alpha_max))
    finite = np.array([abs(p.mismatch) for p in points if math.isfinite(p.mismatch)])
    if len(finite) and np.count_nonzero(finite < CONTINUUM_RESIDUAL) > CONTINUUM_FRACTION * len(points):
        result.continuum = True
        return result

    def residual(alpha):
        return mismatch(problem, alpha, controls)[0]

    for lo, hi in _sign_brackets(points):
        result.brackets_used.append((lo, hi))
        root = lo if lo == hi else optimize.brentq(residual, lo, hi, xtol=xtol, rtol=4 * np.finfo(float).eps)
        if result.solutions and abs(root - result.solutions[-1].alpha_star) <= xtol:
            continue
        result.solutions.append(_finite_solution(problem, root, (lo, hi), controls))
    return result


def _finite_solution(problem, alpha, bracket, controls) -> Solution:
    # integrate slightly past b so the zero event near b is captured
    r_end = problem.b + 1e-6 * (problem.b - problem.a)
    prof = integrate(problem, alpha, controls, r_end=r_end, stop_on_zero=False, stop_on_bounce=False)
    return Solution(float(alpha), prof, bracket, float(abs(prof(problem.b)[0])))


def count_solutions(problem: RadialProblem, alpha_range: tuple[float, float] = (1e-3, 1e3),
                    grid_size: int = 512, controls: IntegratorControls = DEFAULT_CONTROLS,
                    workers: int = 1) -> tuple[int, ShootingResult]:
    """Number of refined roots of the mismatch over the grid, with the scan."""
    result = solve_annulus(problem, controls, alpha_min=alpha_range[0], alpha_max=alpha_range[1],
                           grid=grid_size, workers=workers)
    if result.continuum:
        raise ContinuumFlag(result)
    return result.count, result


# ---------------------------------------------------------------------------
# exterior domain


def _exterior_class(prof: SolutionProfile) -> str:
    if prof.termination is Termination.HIT_ZERO:
        return CROSSING
    if prof.termination is Termination.BOUNCED:
        return BOUNCING
    if prof.termination is Termination.DIVERGED:
        return DIVERGED
    return UNDECIDED


def classify_exterior(problem: RadialProblem, alpha: float,
                      controls: IntegratorControls = DEFAULT_CONTROLS, *,
                      r_limit: float = 1e5) -> tuple[str, SolutionProfile]:
    """Crossing (u hits 0) or Bouncing (u' = 0 with 0 < u < B on descent).

    Trajectories still undecided at the controls' r_max are continued in
    decades up to ``r_limit``.
    """
    prof = integrate(problem, alpha, controls)
    return _continue_until_decided(prof, r_limit)


def _continue_until_decided(prof, r_limit, atol=None, v_override=None):
    cls = _exterior_class(prof)
    cap = prof.r[-1]
    first = v_override is not None
    while (cls == UNDECIDED or first) and cap < r_limit:
        cap = min(10.0 * cap, r_limit)
        prof = extend(prof, cap, atol=atol, v_override=v_override if first else None)
        first = False
        cls = _exterior_class(prof)
    return cls, prof


def solve_exterior(problem: RadialProblem, controls: IntegratorControls = DEFAULT_CONTROLS, *,
                   alpha_min: float = 1e-3, alpha_max: float = 1e3, grid: int = 64,
                   bisect_tol: float = ALPHA_XTOL, r_max: Optional[float] = None,
                   extend_tail: bool = True) -> ShootingResult:
    """Ground states on (a, inf) as Crossing/Bouncing separatrices in alpha.

    A coarse geometric scan locates every class change; each one is bisected
    until the bracket stops shrinking in floating point (well below
    ``bisect_tol``).  The bouncing side of the final bracket is the candidate
    ground state; when ``extend_tail`` is set its tail is re-shot from the
    last trusted node until it reaches ``r_max`` (default: the controls' cap).
    """
    if not problem.exterior:
        raise DomainError("solve_exterior needs b = inf")
    _check_range(alpha_min, alpha_max, grid)
    r_target = controls.r_cap(problem) if r_max is None else float(r_max)
    alphas = np.geomspace(alpha_min, alpha_max, int(grid))
    classes = [classify_exterior(problem, a, controls)[0] for a in alphas]
    result = ShootingResult(problem, [], list(zip(alphas.tolist(), classes)), [], (alpha_min, alpha_max))
    if classes[0] == classes[-1] and len(set(classes)) == 1:
        raise BracketError(f"every alpha in [{alpha_min:g}, {alpha_max:g}] classifies as {classes[0]}; "
                           "widen the alpha range (lower alpha_min or raise alpha_max)")
    for k in range(len(alphas) - 1):
        pair = {classes[k], classes[k + 1]}
        if pair != {CROSSING, BOUNCING}:
            continue
        lo, hi = float(alphas[k]), float(alphas[k + 1])
        result.brackets_used.append((lo, hi))
        sol = _bisect_separatrix(problem, lo, hi, classes[k], controls, bisect_tol, r_target,
                                 extend_tail, result.history)
        result.solutions.append(sol)
    if not result.solutions:
        raise BracketError("no Crossing/Bouncing transition in the scanned alpha range; widen the range")
    return result


def _bisect_separatrix(problem, lo, hi, lo_class, controls, tol, r_target, extend_tail, history):
    hi_class = CROSSING if lo_class == BOUNCING else BOUNCING
    prof_lo = classify_exterior(problem, lo, controls)[1]
    prof_hi = classify_exterior(problem, hi, controls)[1]
    while True:
        history.append((lo, hi, lo_class, hi_class))
        mid = 0.5 * (lo + hi)
        if not lo < mid < hi:
            break
        cls, prof = classify_exterior(problem, mid, controls)
        if cls == lo_class:
            lo, prof_lo = mid, prof
        elif cls == hi_class:
            hi, prof_hi = mid, prof
        else:
            break  # undecided even at r_limit: the bracket cannot be refined further
    bouncing, crossing = (prof_lo, prof_hi) if lo_class == BOUNCING else (prof_hi, prof_lo)
    ground = _trusted_part(bouncing, crossing)
    if extend_tail:
        ground = _extend_separatrix(ground, r_target)
    if ground.r[-1] > r_target:
        ground = truncate(ground, r_target)
    tail = None
    try:
        tail = tail_diagnostics(ground)
    except StateError:
        pass
    width = hi - lo
    lm = problem.spec.landmarks
    accepted = bool(width < tol and tail is not None and tail.u_end < lm.B and tail.ru_decreasing
                    and ground.r[-1] >= r_target * (1 - 1e-12))
    return Solution(0.5 * (lo + hi), ground, (lo, hi), width, tail, accepted)


def _trusted_part(bouncing: SolutionProfile, crossing: SolutionProfile,
                  agreement: float = SEPARATRIX_AGREEMENT, samples: int = 4000) -> SolutionProfile:
    """Truncate ``bouncing`` where it stops agreeing with ``crossing``.

    The exact separatrix lies between the two trajectories, so their relative
    distance bounds the error of either one.
    """
    r0 = max(bouncing.dense.r_min, crossing.dense.r_min)
    r1 = min(bouncing.r[-1], crossing.r[-1])
    r = np.linspace(r0, r1, samples)
    ub, uc = bouncing.dense(r), crossing.dense(r)
    ok = (np.abs(ub[0] - uc[0]) <= agreement * np.abs(ub[0])) & (ub[0] > 0)
    ok[0] = True
    bad = np.flatnonzero(~ok)
    stop = r[bad[0] - 1] if len(bad) else r1
    # keep to the descent: never cut before the peak
    if bouncing.events.peak is not None:
        stop = max(stop, bouncing.events.peak[0])
    return truncate(bouncing, float(stop))


def _extend_separatrix(ground: SolutionProfile, r_target: float, max_segments: int = 40) -> SolutionProfile:
    """Re-shoot the slope at the end of ``ground`` until it reaches ``r_target``.

    Each step keeps u at the last trusted node, bisects u' between Crossing
    and Bouncing continuations to machine precision, and appends the part on
    which both sides still agree.
    """
    rtol = ground.controls.rtol
    for _ in range(max_segments):
        r0, u0, v0 = float(ground.r[-1]), float(ground.u[-1]), float(ground.v[-1])
        if r0 >= r_target:
            break
        if not (u0 > 0 and v0 < 0):
            break
        atol = rtol * 1e-3 * min(abs(u0), abs(v0))
        limit = max(10 * r_target, 1e4)

        def shoot(v):
            return _continue_until_decided(ground, limit, atol=atol, v_override=v)

        eps = 1e-13
        while True:
            vc, vb = v0 * (1 + eps), v0 * (1 - eps)
            cc, pc = shoot(vc)
            cb, pb = shoot(vb)
            if cc == CROSSING and cb == BOUNCING:
                break
            eps *= 4
            if eps > 1e-2:
                return ground
        while True:
            vm = 0.5 * (vc + vb)
            if not (min(vc, vb) < vm < max(vc, vb)):
                break
            cm, pm = shoot(vm)
            if cm == CROSSING:
                vc, pc = vm, pm
            elif cm == BOUNCING:
                vb, pb = vm, pm
            else:
                break
        nxt = _trusted_part(pb, pc)
        if nxt.r[-1] <= r0 * (1 + 1e-12):
            break
        ground = nxt
    return ground
