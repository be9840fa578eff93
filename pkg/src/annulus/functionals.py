"""Branch inversion and the comparison functionals V, P, Pbar, W, J.

A single-peaked profile u on [a, z] is inverted into its rising branch
r(s) on [0, M] and its falling branch rbar(s) on [s_end, M].  Along each
branch r'(s) = 1/u'(r(s)), so every functional is written in terms of u'
at the inverted radius rather than derivatives of an interpolant.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy import optimize
from scipy.interpolate import PchipInterpolator

from .errors import DataError, DomainError, StateError, WindowError
from .nonlinearity import NonlinearitySpec
from .radial_ode import SolutionProfile, Termination

GUARD_BAND = 1e-6  # |s - B| excluded from P and Pbar when B > 0
INTERSECTION_GRID = 2048
PAIR_GRID = 512
MONOTONE_TOL = 1e-12  # relative slack when checking branch monotonicity
NEWTON_ITERS = 80


def richardson_derivative(fun: Callable[[np.ndarray], np.ndarray], x: np.ndarray, h) -> np.ndarray:
    """Central difference with one Richardson step (error O(h^4))."""
    d1 = (fun(x + h) - fun(x - h)) / (2 * h)
    d2 = (fun(x + h / 2) - fun(x - h / 2)) / h
    return (4.0 * d2 - d1) / 3.0


@dataclass(frozen=True, eq=False)
class Branch:
    """Inverse of u on one monotone piece of a profile."""

    profile: SolutionProfile
    rising: bool
    s_nodes: np.ndarray  # increasing
    r_nodes: np.ndarray  # matching radii
    s_lo: float
    s_hi: float
    interp: PchipInterpolator = field(init=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "interp", PchipInterpolator(self.s_nodes, self.r_nodes, extrapolate=True))

    def r(self, s) -> np.ndarray:
        s = np.asarray(s, dtype=float)
        flat = np.atleast_1d(s)
        if np.any(flat < self.s_lo - 1e-14) or np.any(flat > self.s_hi + 1e-14):
            raise DomainError(f"s outside branch support [{self.s_lo!r}, {self.s_hi!r}]")
        out = _invert(self, np.clip(flat, self.s_lo, self.s_hi))
        return out if s.ndim else float(out[0])

    def uprime(self, s) -> np.ndarray:
        r = self.r(s)
        return self.profile.dense(r)[1]

    def rprime(self, s) -> np.ndarray:
        return 1.0 / self.uprime(s)


def _invert(branch: Branch, s: np.ndarray) -> np.ndarray:
    sn, rn = branch.s_nodes, branch.r_nodes
    guess = np.asarray(branch.interp(s), float)
    k = np.clip(np.searchsorted(sn, s, side="left"), 1, len(sn) - 1)
    lo, hi = rn[k - 1].copy(), rn[k].copy()  # u(lo) <= s <= u(hi) in s-order
    exact_lo, exact_hi = s == sn[k - 1], s == sn[k]
    r = np.clip(guess, np.minimum(lo, hi), np.maximum(lo, hi))
    dense = branch.profile.dense
    for _ in range(NEWTON_ITERS):
        u, v = dense(r)
        g = u - s
        # shrink the bracket: g < 0 means r lies on the low-s side
        below = g < 0
        lo = np.where(below, r, lo)
        hi = np.where(below, hi, r)
        with np.errstate(divide="ignore", invalid="ignore"):
            step = r - g / v
        inside = np.isfinite(step) & ((step - lo) * (step - hi) < 0)
        nxt = np.where(inside, step, 0.5 * (lo + hi))
        done = (np.abs(nxt - r) <= 4 * np.finfo(float).eps * np.abs(r)) | (g == 0)
        r = np.where(g == 0, r, nxt)
        if np.all(done):
            break
    r = np.where(exact_lo, rn[k - 1], r)
    r = np.where(exact_hi, rn[k], r)
    return r


@dataclass(frozen=True, eq=False)
class BranchPair:
    rising: Branch
    falling: Branch
    M: float
    c: float
    a: float
    profile: SolutionProfile
    falling_end: str  # "zero", "bounce" or "truncated"

    def r(self, s):
        return self.rising.r(s)

    def rbar(self, s):
        return self.falling.r(s)


def _strict(values: np.ndarray, increasing: bool) -> bool:
    d = np.diff(values)
    slack = MONOTONE_TOL * np.maximum(np.abs(values[1:]), 1.0)
    return bool(np.all(d > -slack)) if increasing else bool(np.all(d < slack))


def invert_branches(profile: SolutionProfile) -> BranchPair:
    """Rising and falling inverse branches of a single-peaked profile."""
    if profile.events.peak is None:
        raise StateError("profile has no peak event; integrate further or increase alpha")
    c, M = profile.events.peak
    r, u = profile.r, profile.u
    rise = r <= c
    r_up = np.append(r[rise & (r < c)], c)
    u_up = np.append(u[rise & (r < c)], M)
    if not _strict(u_up, True):
        raise DataError("u is not monotone on the rising branch")
    # falling part ends at the first zero or trough after the peak
    end, kind = r[-1], "truncated"
    if profile.events.zero is not None and profile.events.zero > c:
        end, kind = profile.events.zero, "zero"
    later = [t for t in profile.events.troughs if t[0] > c]
    if later and later[0][0] < end:
        end, kind = later[0][0], "bounce"
    fall = (r > c) & (r < end)
    r_dn = np.concatenate([[c], r[fall], [end]])
    u_dn = np.concatenate([[M], u[fall], [0.0 if kind == "zero" else float(profile.dense(end)[0])]])
    if not _strict(u_dn, False):
        raise DataError("u is not monotone on the falling branch")
    u_up, r_up = _dedupe(u_up, r_up)
    s_dn, r_dn = _dedupe(u_dn[::-1], r_dn[::-1])
    rising = Branch(profile, True, u_up, r_up, 0.0, float(M))
    falling = Branch(profile, False, s_dn, r_dn, float(max(s_dn[0], 0.0)), float(M))
    return BranchPair(rising, falling, float(M), float(c), float(profile.problem.a), profile, kind)


def _dedupe(s, r):
    keep = np.concatenate([[True], np.diff(s) > 0])
    return s[keep], r[keep]


# ---------------------------------------------------------------------------
# functionals on a single profile


@dataclass(frozen=True)
class FunctionalTrace:
    s_grid: np.ndarray  # decreasing from M
    V: np.ndarray
    P: np.ndarray
    Pbar: np.ndarray
    W: np.ndarray
    V_prime_formula: np.ndarray
    P_prime_formula: np.ndarray
    Pbar_prime_formula: np.ndarray
    guard_excluded: int  # points dropped from P/Pbar near s = B
    truncated: bool  # falling branch does not reach down to the smallest s


def _F_over_f(spec: NonlinearitySpec, s):
    return np.asarray(spec.F_over_f(np.asarray(s, float)), float)


def functional_values(branch: Branch, spec: NonlinearitySpec, n: int, s) -> dict:
    """V, P (or Pbar), W and the derivative formulas along one branch at s."""
    s = np.asarray(s, dtype=float)
    r = branch.r(s)
    v = branch.profile.dense(r)[1]
    F = np.asarray(spec.F(s), float)
    ratio = _F_over_f(spec, s)
    ratio_prime = np.asarray(spec.F_over_f_prime(s), float)
    V = r ** (2 * (n - 1)) * (v**2 + 2 * F)
    P = -2 * n * ratio * r ** (n - 1) * v - r**n * v**2 - 2 * r**n * F
    with np.errstate(invalid="ignore"):
        W = r * np.sqrt(v**2 + 2 * F)
    with np.errstate(divide="ignore"):
        V_prime = 4 * (n - 1) * r ** (2 * n - 3) * F / v
    P_prime = (n - 2 - 2 * n * ratio_prime) * r ** (n - 1) * v
    return {"r": r, "v": v, "V": V, "P": P, "W": W, "V_prime": V_prime, "P_prime": P_prime}


def peak_value(branches: BranchPair, spec: NonlinearitySpec, n: int) -> float:
    """The limit of P and Pbar at s = M: -2 c^n F(M)."""
    return float(-2.0 * branches.c**n * spec.F(branches.M))


def eval_functionals(branches: BranchPair, spec: NonlinearitySpec, n: int,
                     s_grid: Optional[np.ndarray] = None, num: int = 512) -> FunctionalTrace:
    """V, P on the rising branch and Pbar, W on the falling branch."""
    M = branches.M
    if s_grid is None:
        s_grid = np.linspace(M, 0.0, num)
    s_grid = np.asarray(s_grid, float)
    if np.any(s_grid < 0) or np.any(s_grid > M):
        raise DomainError("s grid must lie in [0, M]")
    rise = functional_values(branches.rising, spec, n, s_grid)
    in_fall = s_grid >= branches.falling.s_lo
    nan = np.full_like(s_grid, np.nan)
    Pbar, W, Pbar_prime = nan.copy(), nan.copy(), nan.copy()
    if in_fall.any():
        fall = functional_values(branches.falling, spec, n, s_grid[in_fall])
        Pbar[in_fall], W[in_fall], Pbar_prime[in_fall] = fall["P"], fall["W"], fall["P_prime"]
    P = rise["P"].copy()
    B = spec.landmarks.B
    guard = (np.abs(s_grid - B) < GUARD_BAND) if B > 0 else np.zeros_like(s_grid, bool)
    P[guard] = np.nan
    Pbar[guard] = np.nan
    at_peak = s_grid == M
    P[at_peak] = Pbar[at_peak] = peak_value(branches, spec, n)
    V_prime = rise["V_prime"].copy()
    V_prime[at_peak] = np.nan
    return FunctionalTrace(s_grid, rise["V"], P, Pbar, W, V_prime, rise["P_prime"], Pbar_prime,
                           int(guard.sum()), bool((~in_fall).any()))


@dataclass(frozen=True)
class IdentityReport:
    window: tuple[float, float]
    V_max_rel_dev: float
    P_max_rel_dev: float
    Pbar_max_rel_dev: float
    P_sign_ok: Optional[bool]  # P' <= 0 above beta where (f3) holds
    Pbar_sign_ok: Optional[bool]  # Pbar' >= 0 above beta where (f3) holds
    peak_limit_rel_dev: float  # extrapolated P(s -> M) vs -2 c^n F(M)
    points: int

    @property
    def max_rel_dev(self) -> float:
        return max(self.V_max_rel_dev, self.P_max_rel_dev, self.Pbar_max_rel_dev)


def _rel_dev(fd, formula) -> float:
    ok = np.isfinite(fd) & np.isfinite(formula)
    if not ok.any():
        return math.nan
    return float(np.max(np.abs(fd[ok] - formula[ok]) / np.abs(formula[ok])))


def derivative_identity_check(branches: BranchPair, spec: NonlinearitySpec, n: int,
                              window: tuple[float, float] = (0.1, 0.9), points: int = 200,
                              fd_step: float = 1e-4, f3_holds: Optional[bool] = None) -> IdentityReport:
    """Compare finite differences of V, P, Pbar with their closed-form derivatives.

    ``window`` is a fraction of M.  It must avoid s = M and the guard band
    around s = B.
    """
    M, B = branches.M, spec.landmarks.B
    lo, hi = window[0] * M, window[1] * M
    h = fd_step * M
    if not (0 < window[0] < window[1] < 1):
        raise WindowError("window must satisfy 0 < lo < hi < 1 (fractions of M)")
    if B > 0 and lo - h - GUARD_BAND <= B <= hi + h + GUARD_BAND:
        raise WindowError(f"window [{lo:g}, {hi:g}] touches the singular level s = B = {B:g}")
    s = np.linspace(lo, hi, points)

    def on(branch, key):
        return lambda x: functional_values(branch, spec, n, x)[key]

    rise = functional_values(branches.rising, spec, n, s)
    V_fd = richardson_derivative(on(branches.rising, "V"), s, h)
    P_fd = richardson_derivative(on(branches.rising, "P"), s, h)
    fall_ok = s - h > branches.falling.s_lo
    Pbar_dev = math.nan
    Pbar_sign = None
    if fall_ok.any():
        sf = s[fall_ok]
        fall = functional_values(branches.falling, spec, n, sf)
        Pbar_fd = richardson_derivative(on(branches.falling, "P"), sf, h)
        Pbar_dev = _rel_dev(Pbar_fd, fall["P_prime"])
    beta = spec.landmarks.beta
    P_sign = None
    if f3_holds:
        above = s > beta
        P_sign = bool(np.all(rise["P_prime"][above] <= 0))
        if fall_ok.any():
            Pbar_sign = bool(np.all(fall["P_prime"][sf > beta] >= 0))
    return IdentityReport((lo, hi), _rel_dev(V_fd, rise["V_prime"]), _rel_dev(P_fd, rise["P_prime"]),
                          Pbar_dev, P_sign, Pbar_sign, peak_limit_check(branches, spec, n), points)


def peak_limit_check(branches: BranchPair, spec: NonlinearitySpec, n: int) -> float:
    """Relative gap between lim_{r -> c} P and -2 c^n F(M).

    P is evaluated on the profile at radii c - d for shrinking d and
    extrapolated linearly to d = 0, where u' vanishes to first order.
    """
    prof = branches.profile
    c = branches.c
    span = c - branches.a
    ds = span * np.array([1e-4, 5e-5])
    r = c - ds
    u, v = prof.dense(r)
    F = np.asarray(spec.F(u), float)
    P = -2 * n * _F_over_f(spec, u) * r ** (n - 1) * v - r**n * v**2 - 2 * r**n * F
    limit = 2 * P[1] - P[0]
    target = peak_value(branches, spec, n)
    return float(abs(limit - target) / abs(target))


# ---------------------------------------------------------------------------
# pairs


@dataclass
class StepVerdict:
    holds: Optional[bool]  # None when the step's premise is not met
    status: str  # "holds", "fails", "trivially true", "vacuous", "premise not met", "not evaluable"
    margin: float = math.nan  # worst margin (positive = satisfied)
    detail: dict = field(default_factory=dict)


@dataclass
class PairReport:
    mode: str
    premise_class: str
    alpha1: float
    alpha2: float
    M1: float
    M2: float
    s_I: Optional[float]
    steps: dict

    def to_dict(self) -> dict:
        def clean(x):
            if isinstance(x, float) and not math.isfinite(x):
                return None
            if isinstance(x, (np.floating, np.bool_)):
                return clean(x.item())
            if isinstance(x, dict):
                return {k: clean(v) for k, v in x.items()}
            if isinstance(x, (list, tuple)):
                return [clean(v) for v in x]
            return x

        d = asdict(self)
        return clean(d)


def _verdict(margins: np.ndarray, detail: Optional[dict] = None) -> StepVerdict:
    margins = np.asarray(margins, float)
    margins = margins[np.isfinite(margins)]
    if margins.size == 0:
        return StepVerdict(True, "vacuous", math.nan, detail or {})
    worst = float(margins.min())
    return StepVerdict(worst > 0, "holds" if worst > 0 else "fails", worst, detail or {})


def _open_grid(lo: float, hi: float, num: int) -> np.ndarray:
    if not hi > lo:
        return np.empty(0)
    return np.linspace(lo, hi, num + 2)[1:-1]


def find_intersections(b1: Branch, b2: Branch, lo: float, hi: float,
                       num: int = INTERSECTION_GRID, tol: float = 1e-10) -> list[float]:
    """Roots of rbar1 - rbar2 on (lo, hi), largest first.

    Sign changes on a ``num``-point grid are refined by Brent's method;
    roots closer than ``tol`` are merged.
    """
    lo = max(lo, b1.s_lo, b2.s_lo)
    if not hi > lo:
        return []
    s = np.linspace(lo, hi, num)
    d = b1.r(s) - b2.r(s)
    roots = []
    for k in range(num - 1):
        if d[k] == 0:
            roots.append(float(s[k]))
        elif d[k] * d[k + 1] < 0:
            roots.append(optimize.brentq(lambda x: b1.r(x) - b2.r(x), s[k], s[k + 1], xtol=1e-14))
    merged = []
    for x in sorted(roots, reverse=True):
        if not merged or merged[-1] - x > tol:
            merged.append(x)
    return merged


def premise_class(p1: SolutionProfile, p2: SolutionProfile, tol: float = 1e-8) -> str:
    """Which kind of pair the step inequalities are being evaluated on.

    The steps are stated for two positive solutions of the same boundary
    value problem.  Under the uniqueness hypotheses such pairs do not exist,
    so pairs of IVP trajectories are also admitted and labelled.
    """
    z1, z2 = p1.events.zero, p2.events.zero
    if z1 is not None and z2 is not None and abs(z1 - z2) <= tol * max(1.0, z1):
        return "bvp-solution-pair"
    if p1.problem.exterior and p1.termination is Termination.REACHED_RMAX \
            and p2.termination is Termination.REACHED_RMAX:
        return "decaying-pair"
    return "ivp-trajectory-pair"


def compare_pair(profile1: SolutionProfile, profile2: SolutionProfile,
                 mode: str = "finite", grid: int = PAIR_GRID) -> PairReport:
    """Evaluate the step inequalities on two trajectories with alpha1 < alpha2."""
    if mode not in ("finite", "exterior"):
        raise DomainError(f"mode must be 'finite' or 'exterior', got {mode!r}")
    pr1, pr2 = profile1.problem, profile2.problem
    if pr1.a != pr2.a or pr1.n != pr2.n or pr1.spec != pr2.spec:
        raise DomainError("profiles must share n, a and the nonlinearity")
    if not profile1.alpha < profile2.alpha:
        raise DomainError("profile1 must have the smaller initial slope")
    spec, n = pr1.spec, pr1.n
    lm = spec.landmarks
    beta, B = lm.beta, lm.B
    br1, br2 = invert_branches(profile1), invert_branches(profile2)
    M1, M2 = br1.M, br2.M
    steps = {}

    # step 1: ordering up to beta
    V0 = (pr1.a ** (2 * (n - 1)) * profile1.alpha**2, pr1.a ** (2 * (n - 1)) * profile2.alpha**2)
    if beta == 0:
        steps["step1"] = StepVerdict(V0[0] < V0[1], "trivially true" if V0[0] < V0[1] else "fails",
                                     V0[1] - V0[0], {"V1_0": V0[0], "V2_0": V0[1]})
    elif min(M1, M2) < beta:
        steps["step1"] = StepVerdict(None, "not evaluable",
                                     detail={"reason": "a peak lies below beta", "M1": M1, "M2": M2})
    else:
        s = np.linspace(0, beta, grid + 1)[1:]
        f1 = functional_values(br1.rising, spec, n, s)
        f2 = functional_values(br2.rising, spec, n, s)
        flux = (f2["r"] ** (n - 1) * f2["v"] - f1["r"] ** (n - 1) * f1["v"])[-1]
        order = f1["r"] - f2["r"]
        v_gap = f2["V"] - f1["V"]
        worst = min(float(order.min()), float(flux), float(v_gap.min()))
        steps["step1"] = StepVerdict(worst > 0, "holds" if worst > 0 else "fails", worst,
                                     {"r_order_margin": float(order.min()), "flux_at_beta_margin": float(flux),
                                      "V_order_margin": float(v_gap.min())})

    # step 2: peaks ordered, w < 0 and r1 > r2 on (beta, M1)
    s = _open_grid(beta, min(M1, M2), grid)
    detail = {"M1": M1, "M2": M2, "grid": int(s.size)}
    if s.size:
        f1 = functional_values(br1.rising, spec, n, s)
        f2 = functional_values(br2.rising, spec, n, s)
        w = f1["r"] ** (n - 1) * f1["v"] - f2["r"] ** (n - 1) * f2["v"]
        margins = np.concatenate([[M2 - M1], -w, f1["r"] - f2["r"]])
        detail.update(w_max=float(w.max()), r_order_min=float((f1["r"] - f2["r"]).min()))
        steps["step2"] = _verdict(margins, detail)
    else:
        # (beta, M1) is empty: only the peak ordering carries content
        s0 = _open_grid(0.0, min(M1, M2), grid)
        f1 = functional_values(br1.rising, spec, n, s0)
        f2 = functional_values(br2.rising, spec, n, s0)
        w0 = f1["r"] ** (n - 1) * f1["v"] - f2["r"] ** (n - 1) * f2["v"]
        detail.update(vacuous_interval=True, surrogate_w_max_on_0_M1=float(w0.max()))
        ok = M1 < M2
        steps["step2"] = StepVerdict(ok, "vacuous" if ok else "fails", M2 - M1, detail)

    # step 3: P1(M1) > P2(M1)
    if M1 < M2 and not (B > 0 and abs(M1 - B) < GUARD_BAND):
        P1 = peak_value(br1, spec, n)
        P2 = float(functional_values(br2.rising, spec, n, np.array([M1]))["P"][0])
        steps["step3"] = StepVerdict(P1 > P2, "holds" if P1 > P2 else "fails", P1 - P2,
                                     {"P1_M1": P1, "P2_M1": P2})
    else:
        steps["step3"] = StepVerdict(None, "not evaluable", detail={"reason": "needs M1 < M2 away from B"})

    # step 6 first: falling-branch intersections (needed by steps 4 and 5)
    lower = B if mode == "finite" else 0.0
    s_top = min(M1, M2)
    r1M, r2M = br1.rbar(M1), (br2.rbar(M1) if M1 <= M2 else math.nan)
    roots = find_intersections(br1.falling, br2.falling, lower, s_top) if M1 < M2 else []
    roots = [x for x in roots if x < M1]
    s_I = roots[0] if roots else None
    premise6 = bool(M1 < M2 and r1M < r2M)
    steps["step6"] = StepVerdict(
        (s_I is not None) if premise6 else None,
        ("holds" if s_I is not None else "fails") if premise6 else "premise not met",
        detail={"interval": [lower, M1], "intersections": roots, "rbar1_M1": r1M, "rbar2_M1": r2M})

    # step 4: on [s_I, M1] the falling flux and Pbar are ordered
    if premise6 and s_I is not None and s_I >= beta:
        s = np.linspace(s_I, M1, grid)[:-1]
        f1 = functional_values(br1.falling, spec, n, s)
        f2 = functional_values(br2.falling, spec, n, s)
        flux = f1["r"] ** (n - 1) * f1["v"] - f2["r"] ** (n - 1) * f2["v"]
        Pb1 = np.append(f1["P"], peak_value(br1, spec, n))
        Pb2 = np.append(f2["P"], float(functional_values(br2.falling, spec, n, np.array([M1]))["P"][0]))
        if B > 0:
            keep = np.abs(np.append(s, M1) - B) >= GUARD_BAND
            Pb1, Pb2 = Pb1[keep], Pb2[keep]
        steps["step4"] = _verdict(np.concatenate([flux, Pb1 - Pb2]),
                                  {"flux_min": float(flux.min()), "Pbar_gap_min": float((Pb1 - Pb2).min())})
    else:
        steps["step4"] = StepVerdict(None, "premise not met",
                                     detail={"reason": "needs rbar1(M1) < rbar2(M1) and s_I in [beta, M1)"})

    # step 5: at beta on the falling branches
    premise5 = M1 < M2 and (r1M >= r2M or (s_I is not None and s_I > beta))
    if premise5 and 0 < beta < M1 and beta >= max(br1.falling.s_lo, br2.falling.s_lo):
        f1 = functional_values(br1.falling, spec, n, np.array([beta]))
        f2 = functional_values(br2.falling, spec, n, np.array([beta]))
        m_r = float(f1["r"][0] - f2["r"][0])
        m_flux = float(f1["r"][0] * f1["v"][0] - f2["r"][0] * f2["v"][0])
        worst = min(m_r, m_flux)
        steps["step5"] = StepVerdict(worst > 0, "holds" if worst > 0 else "fails", worst,
                                     {"rbar_gap": m_r, "flux_gap": m_flux})
    else:
        steps["step5"] = StepVerdict(None, "premise not met",
                                     detail={"reason": "needs case (i) or (ii) with beta > 0 on both falling branches"})

    if mode == "exterior":
        steps["exterior"] = _j_trace(br1, br2, n, grid)

    return PairReport(mode, premise_class(profile1, profile2), profile1.alpha, profile2.alpha,
                      M1, M2, s_I, steps)


def _j_trace(br1: BranchPair, br2: BranchPair, n: int, grid: int) -> StepVerdict:
    """J = u1'(rbar1)^2 - u2'(rbar2)^2 and its logarithmic-derivative bound."""
    lo = max(br1.falling.s_lo, br2.falling.s_lo)
    hi = min(br1.M, br2.M)
    span = hi - lo
    h = 1e-5 * span
    s = _open_grid(lo + 2 * h, hi - 2 * h, grid) if span > 0 else np.empty(0)
    if s.size == 0:
        return StepVerdict(None, "not evaluable", detail={"reason": "empty common falling support"})

    def J(x):
        return br1.falling.uprime(x) ** 2 - br2.falling.uprime(x) ** 2

    Jv = J(s)
    Jp = richardson_derivative(J, s, h)
    r1 = br1.falling.r(s)
    r2 = br2.falling.r(s)
    r1p = br1.falling.rprime(s)
    bound = -(n - 1) * r1p / r1
    negative = Jv < 0
    premise = negative & (r1 <= r2)
    with np.errstate(divide="ignore", invalid="ignore"):
        margin = bound - Jp / Jv
    detail = {"s_range": [float(s[0]), float(s[-1])], "J_negative_points": int(negative.sum()),
              "premise_points": int(premise.sum()),
              "J_min": float(Jv.min()), "J_max": float(Jv.max()),
              "margin_outside_premise_min": float(margin[negative & ~premise].min())
              if (negative & ~premise).any() else None}
    if not premise.any():
        return StepVerdict(None, "premise not met", math.nan, detail)
    v = _verdict(margin[premise], detail)
    return v
