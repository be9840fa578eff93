"""Initial value problem for radial solutions and its diagnostics.

The radial equation u'' + (n-1)/r u' + f(u) = 0 is integrated as the system

    (u, v)' = (v, -(n-1) v / r - f(u)),    u(a) = 0, v(a) = alpha

with an embedded Runge-Kutta pair (scipy's DOP853, dense output of order 7).
Sign changes of v, u, u - B and u - beta are located on the dense output.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.integrate import solve_ivp

from .errors import DomainError, StateError
from .nonlinearity import NonlinearitySpec


class Termination(str, Enum):
    HIT_ZERO = "HitZero"
    BOUNCED = "Bounced"
    REACHED_RMAX = "ReachedRMax"
    DIVERGED = "Diverged"


@dataclass(frozen=True)
class RadialProblem:
    n: int
    a: float
    b: float
    spec: NonlinearitySpec

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 2:
            raise DomainError(f"dimension n must be an integer >= 2, got {self.n}")
        object.__setattr__(self, "n", int(self.n))
        if not (self.a > 0 and math.isfinite(self.a)):
            raise DomainError(f"inner radius must be positive and finite, got a={self.a}")
        if not self.b > self.a:
            raise DomainError(f"outer radius must exceed a, got a={self.a}, b={self.b}")
        if math.isinf(self.b) and not self.spec.landmarks.B > 0:
            raise DomainError("exterior problems (b = inf) require B > 0")

    @property
    def exterior(self) -> bool:
        return math.isinf(self.b)

    def with_b(self, b: float) -> "RadialProblem":
        return replace(self, b=b)


@dataclass(frozen=True)
class IntegratorControls:
    rtol: float = 1e-10
    atol: float = 1e-12
    event_tol: float = 1e-10
    r_max: Optional[float] = None
    overflow: float = 1e8
    seed_step: float = 1e-8
    method: str = "DOP853"

    def __post_init__(self):
        if not (self.rtol > 0 and self.atol > 0):
            raise DomainError("tolerances must be positive")

    def r_cap(self, problem: RadialProblem) -> float:
        if self.r_max is not None:
            return float(self.r_max)
        default = max(50.0 * problem.a, 100.0)
        return default if problem.exterior else max(default, 2.0 * problem.b)


DEFAULT_CONTROLS = IntegratorControls()


@dataclass(frozen=True)
class LevelCrossing:
    level: str  # "B" or "beta"
    r: float
    branch: str  # "rising" or "falling"


@dataclass(frozen=True)
class Events:
    peak: Optional[tuple[float, float]] = None  # (c, M) of the first maximum
    zero: Optional[float] = None
    bounce: Optional[float] = None
    level_crossings: tuple[LevelCrossing, ...] = ()
    peaks: tuple[tuple[float, float], ...] = ()  # every interior maximum
    troughs: tuple[tuple[float, float], ...] = ()


class Trajectory:
    """Piecewise dense output r -> (u, v)."""

    def __init__(self, pieces: Sequence[tuple[float, float, Callable]]):
        self.pieces = list(pieces)
        self._starts = np.array([p[0] for p in self.pieces])

    @property
    def r_min(self) -> float:
        return self.pieces[0][0]

    @property
    def r_max(self) -> float:
        return self.pieces[-1][1]

    def __call__(self, r):
        r = np.asarray(r, dtype=float)
        flat = np.atleast_1d(r)
        out = np.empty((2, flat.size))
        idx = np.clip(np.searchsorted(self._starts, flat, side="right") - 1, 0, len(self.pieces) - 1)
        for k in np.unique(idx):
            sel = idx == k
            out[:, sel] = np.asarray(self.pieces[k][2](flat[sel])).reshape(2, -1)
        return out if r.ndim else out[:, 0]


@dataclass(frozen=True, eq=False)
class SolutionProfile:
    problem: RadialProblem
    alpha: float
    r: np.ndarray
    u: np.ndarray
    v: np.ndarray
    events: Events
    termination: Termination
    dense: Trajectory = field(repr=False)
    controls: IntegratorControls = DEFAULT_CONTROLS
    message: str = ""

    @property
    def energy(self) -> np.ndarray:
        return self.v**2 + 2.0 * self.problem.spec.F_even(self.u)

    @property
    def peak(self) -> Optional[tuple[float, float]]:
        return self.events.peak

    def __call__(self, r):
        return self.dense(r)

    def check_shape(self) -> list[str]:
        """Violations of the single-peak shape for HitZero profiles (empty when fine)."""
        problems = []
        if self.termination is not Termination.HIT_ZERO:
            return problems
        if len(self.events.peaks) != 1:
            problems.append(f"expected one peak, found {len(self.events.peaks)}")
        signs = np.sign(self.v[np.abs(self.v) > 0])
        if np.count_nonzero(np.diff(signs)) != 1:
            problems.append("u' does not change sign exactly once")
        beta = self.problem.spec.landmarks.beta
        if self.events.peak is not None and not self.events.peak[1] > beta + self.controls.event_tol:
            problems.append(f"peak value {self.events.peak[1]!r} does not exceed beta={beta!r}")
        return problems


# ---------------------------------------------------------------------------
# integration


@dataclass
class _Segment:
    r: np.ndarray
    u: np.ndarray
    v: np.ndarray
    piece: tuple[float, float, Callable]
    peaks: list
    troughs: list
    zeros: list
    levels: list
    status: Termination
    message: str = ""


def _rhs_factory(n: int, spec: NonlinearitySpec):
    f = spec.f_odd
    k = n - 1

    def rhs(r, y):
        u, v = y
        return [v, -k * v / r - f(u)]

    return rhs


def _make_events(spec, controls, stop_zero, stop_bounce):
    lm = spec.landmarks

    def zero(r, y):
        return y[0]

    zero.direction = -1
    zero.terminal = bool(stop_zero)

    def peak(r, y):
        return y[1]

    peak.direction = -1

    def trough(r, y):
        return y[1]

    trough.direction = 1
    trough.terminal = bool(stop_bounce)

    def overflow(r, y):
        return controls.overflow - max(abs(y[0]), abs(y[1]))

    overflow.direction = -1
    overflow.terminal = True
    events = [zero, peak, trough, overflow]
    names = ["zero", "peak", "trough", "overflow"]
    for name, level in (("B", lm.B), ("beta", lm.beta)):
        if level > 0:
            def cross(r, y, level=level):
                return y[0] - level

            events.append(cross)
            names.append(name)
    return events, names


def _run_segment(problem, r0, y0, r_end, controls, *, stop_zero=True, stop_bounce=True,
                 atol=None) -> _Segment:
    """Integrate from (r0, y0) to r_end, stopping at a zero or a bounce.

    Minima of u outside (0, B) are not bounces.  The trough event is terminal
    for speed, so such a minimum restarts the integration just past it.
    """
    spec = problem.spec
    B = spec.landmarks.B
    events, names = _make_events(spec, controls, stop_zero, stop_bounce)
    rhs = _rhs_factory(problem.n, spec)
    atol = controls.atol if atol is None else atol
    peaks, troughs, zeros, levels = [], [], [], []
    r_parts, y_parts, pieces = [], [], []
    status, message = Termination.REACHED_RMAX, ""
    start, y_start = r0, list(y0)
    while True:
        sol = solve_ivp(rhs, (start, r_end), y_start, method=controls.method, rtol=controls.rtol,
                        atol=atol, events=events, dense_output=True)
        extra, new_zero, new_trough = [], False, None
        for name, te, ye in zip(names, sol.t_events, sol.y_events):
            for t, y in zip(te, ye):
                if t <= start:
                    continue
                extra.append((t, y))
                if name == "peak":
                    peaks.append((float(t), float(y[0])))
                elif name == "trough":
                    troughs.append((float(t), float(y[0])))
                    new_trough = float(y[0])
                elif name == "zero":
                    zeros.append(float(t))
                    new_zero = True
                elif name in ("B", "beta"):
                    levels.append(LevelCrossing(name, float(t), "rising" if y[1] > 0 else "falling"))
                elif name == "overflow":
                    status, message = Termination.DIVERGED, f"overflow guard |u|,|u'| > {controls.overflow:g}"
        r, y = sol.t, sol.y
        if extra:
            te = np.array([e[0] for e in extra])
            ye = np.array([e[1] for e in extra]).T
            keep = ~np.isin(te, r)
            r = np.concatenate([r, te[keep]])
            y = np.concatenate([y, ye[:, keep]], axis=1)
            order = np.argsort(r, kind="stable")
            r, y = r[order], y[:, order]
        first = not r_parts
        r_parts.append(r if first else r[1:])
        y_parts.append(y if first else y[:, 1:])
        pieces.append((float(r[0]), float(r[-1]), lambda t, d=sol.sol: d(t)))
        if sol.status == -1:
            status, message = Termination.DIVERGED, sol.message
            break
        if sol.status != 1 or status is Termination.DIVERGED:
            break
        if new_zero and stop_zero:
            status = Termination.HIT_ZERO
            break
        if new_trough is not None and stop_bounce and 0 < new_trough < B:
            status = Termination.BOUNCED
            break
        # a minimum below zero: step just past it so the event does not refire at the start
        t_end = float(sol.t[-1])
        nudge = 1e-9 * max(1.0, abs(t_end))
        if t_end + nudge >= r_end:
            break
        start, y_start = t_end + nudge, list(sol.sol(t_end + nudge))
    r = np.concatenate(r_parts)
    y = np.concatenate(y_parts, axis=1)
    piece = pieces[0] if len(pieces) == 1 else (pieces[0][0], pieces[-1][1], Trajectory(pieces))
    return _Segment(r, y[0].copy(), y[1].copy(), piece, peaks, troughs, zeros, levels, status, message)


def _seed_segment(problem, alpha, h) -> _Segment:
    """Local expansion on [a, a + h] avoiding f' singularities at u = 0."""
    n, a, spec = problem.n, problem.a, problem.spec

    def taylor(t):
        tau = np.asarray(t, float) - a
        u = alpha * tau - (n - 1) * alpha * tau**2 / (2 * a)
        v = alpha - (n - 1) * alpha * tau / a - spec.F(np.abs(alpha * tau)) / alpha
        return np.vstack([np.atleast_1d(u), np.atleast_1d(v)])

    r = np.array([a, a + h])
    uv = taylor(r)
    return _Segment(r, uv[0], uv[1], (a, a + h, taylor), [], [], [], [], Termination.REACHED_RMAX)


def _assemble(problem, alpha, segments, controls) -> SolutionProfile:
    r = np.concatenate([s.r if i == 0 else s.r[1:] for i, s in enumerate(segments)])
    u = np.concatenate([s.u if i == 0 else s.u[1:] for i, s in enumerate(segments)])
    v = np.concatenate([s.v if i == 0 else s.v[1:] for i, s in enumerate(segments)])
    peaks = [p for s in segments for p in s.peaks]
    troughs = [t for s in segments for t in s.troughs]
    zeros = [z for s in segments for z in s.zeros]
    levels = tuple(c for s in segments for c in s.levels)
    last = segments[-1]
    bounce = None
    if troughs and 0 < troughs[0][1] < max(problem.spec.landmarks.B, 0.0) + 1e-12:
        bounce = troughs[0][0]
    events = Events(peak=peaks[0] if peaks else None, zero=zeros[0] if zeros else None,
                    bounce=bounce, level_crossings=levels, peaks=tuple(peaks), troughs=tuple(troughs))
    return SolutionProfile(problem, float(alpha), r, u, v, events, last.status,
                           Trajectory([s.piece for s in segments]), controls, last.message)


def integrate(problem: RadialProblem, alpha: float, controls: IntegratorControls = DEFAULT_CONTROLS,
              *, r_end: Optional[float] = None, stop_on_zero: bool = True,
              stop_on_bounce: bool = True) -> SolutionProfile:
    """Integrate from r = a with u(a) = 0, u'(a) = alpha.

    Integration stops at the first of: u reaching 0 from above, a bounce
    (interior minimum of u with 0 < u < B), ``r_end`` (default: the
    controls' r_max cap), or the overflow guard.
    """
    alpha = float(alpha)
    if not (alpha > 0 and math.isfinite(alpha)):
        raise DomainError(f"initial slope must be positive, got alpha={alpha}")
    r_end = controls.r_cap(problem) if r_end is None else float(r_end)
    if not r_end > problem.a:
        raise DomainError("integration end must exceed the inner radius")
    segments = []
    r0, y0 = problem.a, (0.0, alpha)
    if not problem.spec.smooth_origin:
        h = min(controls.seed_step * problem.a, 0.5 * (r_end - problem.a))
        seed = _seed_segment(problem, alpha, h)
        segments.append(seed)
        r0, y0 = seed.r[-1], (seed.u[-1], seed.v[-1])
    segments.append(_run_segment(problem, r0, y0, r_end, controls,
                                 stop_zero=stop_on_zero, stop_bounce=stop_on_bounce))
    return _assemble(problem, alpha, segments, controls)


def extend(profile: SolutionProfile, r_end: float, *, stop_on_zero=True, stop_on_bounce=True,
           atol: Optional[float] = None, v_override: Optional[float] = None) -> SolutionProfile:
    """Continue a ReachedRMax profile from its last node up to ``r_end``.

    ``v_override`` restarts from the last node with a replaced slope; the
    exterior solver uses it to re-shoot the tail of a separatrix.
    """
    if profile.termination is not Termination.REACHED_RMAX:
        raise StateError(f"cannot extend a profile that terminated with {profile.termination.value}")
    r0 = float(profile.r[-1])
    if not r_end > r0:
        return profile
    v0 = profile.v[-1] if v_override is None else v_override
    seg = _run_segment(profile.problem, r0, (profile.u[-1], v0), r_end, profile.controls,
                       stop_zero=stop_on_zero, stop_bounce=stop_on_bounce, atol=atol)
    return concat(profile, seg)


def concat(profile: SolutionProfile, seg: _Segment) -> SolutionProfile:
    prev = _Segment(profile.r, profile.u, profile.v, (profile.dense.r_min, profile.r[-1], profile.dense),
                    list(profile.events.peaks), list(profile.events.troughs),
                    [profile.events.zero] if profile.events.zero else [],
                    list(profile.events.level_crossings), profile.termination, profile.message)
    return _assemble(profile.problem, profile.alpha, [prev, seg], profile.controls)


def truncate(profile: SolutionProfile, r_stop: float) -> SolutionProfile:
    """Drop nodes beyond ``r_stop`` (adding a node at r_stop) and mark ReachedRMax."""
    keep = profile.r < r_stop
    uv = profile.dense(r_stop)
    r = np.append(profile.r[keep], r_stop)
    u = np.append(profile.u[keep], uv[0])
    v = np.append(profile.v[keep], uv[1])
    ev = profile.events

    def before(x):
        return x is not None and x <= r_stop

    events = Events(peak=ev.peak if ev.peak and ev.peak[0] <= r_stop else None,
                    zero=ev.zero if before(ev.zero) else None,
                    bounce=ev.bounce if before(ev.bounce) else None,
                    level_crossings=tuple(c for c in ev.level_crossings if c.r <= r_stop),
                    peaks=tuple(p for p in ev.peaks if p[0] <= r_stop),
                    troughs=tuple(t for t in ev.troughs if t[0] <= r_stop))
    pieces = [(lo, min(hi, r_stop), fn) for lo, hi, fn in profile.dense.pieces if lo < r_stop]
    return replace(profile, r=r, u=u, v=v, events=events, termination=Termination.REACHED_RMAX,
                   dense=Trajectory(pieces), message="truncated")


# ---------------------------------------------------------------------------
# diagnostics


@dataclass(frozen=True)
class EnergyTrace:
    r: np.ndarray
    I: np.ndarray
    Iprime_formula: np.ndarray
    max_jump: float  # largest increase of I between consecutive nodes
    jump_tolerance: float  # 10 x local error tolerance
    Iprime_fd: np.ndarray  # finite differences on the dense output at interior nodes
    fd_mask: np.ndarray  # nodes where the comparison is made
    max_rel_dev: float


def energy_trace(profile: SolutionProfile, *, fd_step: float = 1e-4,
                 floor: float = 0.05) -> EnergyTrace:
    """Energy I = u'^2 + 2F(u) along the nodes and its derivative law.

    The derivative comparison uses Richardson-extrapolated central
    differences of I on the dense output; nodes where |u'| is below ``floor`` times its maximum (the peak
    neighbourhood, where I' vanishes) are excluded from the relative check.
    """
    prob = profile.problem
    r, u, v = profile.r, profile.u, profile.v
    if len(r) < 2:
        raise StateError("profile has fewer than two nodes")
    I = profile.energy
    Ip = -2.0 * (prob.n - 1) * v**2 / r
    ctrl = profile.controls
    tol = 10.0 * (ctrl.rtol * np.maximum(np.abs(I[1:]), np.abs(I[:-1])) + ctrl.atol)
    jumps = np.diff(I)
    k = int(np.argmax(jumps - tol))
    h = fd_step * (r[-1] - r[0])
    interior = (r - h > profile.dense.r_min) & (r + h < profile.dense.r_max)
    mask = interior & (np.abs(v) >= floor * np.max(np.abs(v)))
    fd = np.full_like(r, np.nan)
    if mask.any():
        rr = r[mask]

        def energy_at(x):
            uv = profile.dense(x)
            return uv[1] ** 2 + 2 * prob.spec.F_even(uv[0])

        def central(step):
            return (energy_at(rr + step) - energy_at(rr - step)) / (2 * step)

        # Richardson extrapolation removes the O(h^2) truncation term
        fd[mask] = (4.0 * central(h / 2) - central(h)) / 3.0
    dev = np.abs(fd[mask] - Ip[mask]) / np.abs(Ip[mask]) if mask.any() else np.array([0.0])
    return EnergyTrace(r, I, Ip, float(jumps[k]), float(tol[k]), fd, mask, float(np.max(dev)))


@dataclass(frozen=True)
class TailDiagnostics:
    L_estimate: float  # r^(n-1) u' at the last node
    ru_prime_tail: float  # r u' at the last node
    flux_monotone: bool  # r^(n-1) u' nondecreasing where f(u) < 0 on the last decade
    ru_decreasing: bool  # |r u'| decreasing on the last decade
    r_end: float
    u_end: float


def tail_diagnostics(profile: SolutionProfile, problem: Optional[RadialProblem] = None,
                     *, rel_slack: float = 1e-9) -> TailDiagnostics:
    problem = profile.problem if problem is None else problem
    if not problem.exterior:
        raise StateError("tail diagnostics apply to exterior problems (b = inf) only")
    if profile.termination is not Termination.REACHED_RMAX or not (profile.u[-1] > 0 and profile.v[-1] <= 0):
        raise StateError(f"profile is not in the decay regime (termination {profile.termination.value}, "
                         f"u={profile.u[-1]!r}, u'={profile.v[-1]!r})")
    n = problem.n
    r, u, v = profile.r, profile.u, profile.v
    r_end = r[-1]
    last = r >= r_end / 10.0
    negative = np.asarray(problem.spec.f(np.abs(u)), float) < 0
    sel = last & negative
    flux = r[sel] ** (n - 1) * v[sel]
    slack = rel_slack * np.maximum(np.abs(flux[1:]), np.abs(flux[:-1])) if len(flux) > 1 else 0.0
    flux_ok = bool(len(flux) < 2 or np.all(np.diff(flux) >= -slack))
    ru = np.abs(r[last] * v[last])
    ru_slack = rel_slack * np.maximum(ru[1:], ru[:-1]) if len(ru) > 1 else 0.0
    ru_ok = bool(len(ru) < 2 or np.all(np.diff(ru) <= ru_slack))
    return TailDiagnostics(float(r_end ** (n - 1) * v[-1]), float(r_end * v[-1]), flux_ok, ru_ok,
                           float(r_end), float(u[-1]))
