"""Nonlinearities f, their antiderivatives, landmarks and structural conditions.

Two power families are built in,

    plus:  f(s) = s**p + s**q          minus: f(s) = s**p - s**q        (p > q > 0)

and arbitrary nonlinearities can be supplied as callables through
:func:`custom`.  Every evaluator works on scalars and numpy arrays alike.
"""

from __future__ import annotations

import math
import re
from dataclasses import asdict, dataclass, field
from enum import Enum
from functools import cached_property
from typing import Callable, Optional

import numpy as np
from scipy import integrate, optimize

from .errors import DomainError, ResolutionError, StructureError

ROOT_XTOL = 1e-12
# F/f is replaced by its limit 0 below this threshold when B = 0
RATIO_ZERO_CUTOFF = 1e-10
# ties in sampled inequalities are resolved in favour of "holds"
SAMPLE_TIE_TOL = 1e-12


class Kind(str, Enum):
    PLUS = "plus"
    MINUS = "minus"
    CUSTOM = "custom"


@dataclass(frozen=True)
class Landmarks:
    """Zeros of f and F that organise the phase plane.

    ``B`` is where f turns positive and ``beta`` is the zero of F above B.
    Brackets are intervals of width at most the root tolerance that contain
    the respective sign change.
    """

    B: float
    beta: float
    has_negative_part: bool
    B_bracket: tuple[float, float] = (0.0, 0.0)
    beta_bracket: tuple[float, float] = (0.0, 0.0)


@dataclass(frozen=True, eq=False)
class NonlinearitySpec:
    kind: Kind
    p: Optional[float] = None
    q: Optional[float] = None
    label: str = ""
    f_custom: Optional[Callable] = field(default=None, repr=False)
    fprime_custom: Optional[Callable] = field(default=None, repr=False)
    F_custom: Optional[Callable] = field(default=None, repr=False)
    # True when f is C^1 up to s = 0 (f' bounded near the origin)
    smooth_origin: bool = True

    def __post_init__(self):
        if self.kind in (Kind.PLUS, Kind.MINUS):
            if self.p is None or self.q is None:
                raise DomainError("power families need both exponents p and q")
            if not (math.isfinite(self.p) and math.isfinite(self.q)):
                raise DomainError("exponents must be finite")
            if self.q <= 0:
                raise DomainError(f"exponent q must be positive, got q={self.q}")
            if self.p <= self.q:
                raise DomainError(f"exponents must satisfy p > q, got p={self.p}, q={self.q}")
            object.__setattr__(self, "smooth_origin", self.q >= 1 and self.p >= 1)
            if not self.label:
                object.__setattr__(self, "label", f"{self.kind.value}:p={_fmt(self.p)},q={_fmt(self.q)}")
        elif self.f_custom is None or self.F_custom is None or self.fprime_custom is None:
            raise DomainError("custom nonlinearity needs f, fprime and F evaluators")

    # equality and hashing by label + exponents so specs can key caches
    def __eq__(self, other):
        if not isinstance(other, NonlinearitySpec):
            return NotImplemented
        return (self.kind, self.p, self.q, self.label) == (other.kind, other.p, other.q, other.label)

    def __hash__(self):
        return hash((self.kind, self.p, self.q, self.label))

    @property
    def sign(self) -> int:
        return -1 if self.kind is Kind.MINUS else 1

    def f(self, s):
        if self.kind is Kind.CUSTOM:
            return self.f_custom(s)
        return np.power(s, self.p) + self.sign * np.power(s, self.q)

    def fprime(self, s):
        if self.kind is Kind.CUSTOM:
            return self.fprime_custom(s)
        p, q = self.p, self.q
        with np.errstate(divide="ignore"):
            return p * np.power(s, p - 1) + self.sign * q * np.power(s, q - 1)

    def F(self, s):
        if self.kind is Kind.CUSTOM:
            return self.F_custom(s)
        p, q = self.p, self.q
        return np.power(s, p + 1) / (p + 1) + self.sign * np.power(s, q + 1) / (q + 1)

    def f_odd(self, u: float) -> float:
        """Scalar f extended oddly to u < 0 (used only past a zero of u)."""
        if u >= 0.0:
            if self.kind is Kind.CUSTOM:
                return float(self.f_custom(u))
            return u**self.p + self.sign * u**self.q
        return -self.f_odd(-u)

    def F_even(self, u):
        return self.F(np.abs(u))

    def F_over_f(self, s):
        """F/f with the s -> 0 limit (zero) applied when B = 0."""
        s = np.asarray(s, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            out = np.asarray(self.F(s) / self.f(s), dtype=float)
        if self.landmarks.B == 0.0:
            out = np.where(s < RATIO_ZERO_CUTOFF, 0.0, out)
        return out if out.ndim else float(out)

    def F_over_f_prime(self, s):
        """(F/f)'(s) = 1 - F f' / f^2."""
        s = np.asarray(s, dtype=float)
        fs = self.f(s)
        with np.errstate(divide="ignore", invalid="ignore"):
            out = np.asarray(1.0 - self.F(s) * self.fprime(s) / (fs * fs), dtype=float)
        return out if out.ndim else float(out)

    @cached_property
    def landmarks(self) -> Landmarks:
        return landmarks(self)

    def to_dict(self) -> dict:
        return {"kind": self.kind.value, "p": self.p, "q": self.q, "label": self.label}


def _fmt(x: float) -> str:
    return repr(float(x)).removesuffix(".0") if float(x).is_integer() else repr(float(x))


def power_sum(p: float, q: float) -> NonlinearitySpec:
    return NonlinearitySpec(Kind.PLUS, float(p), float(q))


def power_diff(p: float, q: float) -> NonlinearitySpec:
    return NonlinearitySpec(Kind.MINUS, float(p), float(q))


def custom(f, fprime, F, label: str = "custom", *, smooth_origin: bool = True,
           check_tol: float = 1e-8, check_points=None) -> NonlinearitySpec:
    """Wrap user evaluators after checking that F is the antiderivative of f.

    ``F(s)`` is compared with the quadrature of ``f`` over ``[0, s]`` on a
    small geometric sample; a mismatch above ``check_tol`` (relative to
    ``max(1, |F|)``) raises :class:`DomainError`.
    """
    spec = NonlinearitySpec(Kind.CUSTOM, label=label, f_custom=f, fprime_custom=fprime,
                            F_custom=F, smooth_origin=smooth_origin)
    pts = np.geomspace(1e-3, 10.0, 12) if check_points is None else np.asarray(check_points, float)
    for s in pts:
        ref, _ = integrate.quad(lambda t: float(f(t)), 0.0, float(s), epsabs=1e-13, epsrel=1e-12, limit=200)
        got = float(F(s))
        if abs(got - ref) > check_tol * max(1.0, abs(ref)):
            raise DomainError(f"F is not the antiderivative of f at s={s:g}: F={got!r}, quad={ref!r}")
    return spec


def linear(k: float = math.pi**2) -> NonlinearitySpec:
    """f(u) = k u; a test hook with closed-form radial solutions."""
    k = float(k)
    if not k > 0:
        raise DomainError("linear coefficient must be positive")
    return custom(lambda s: k * s,
                  lambda s: np.full_like(np.asarray(s, float), k),
                  lambda s: 0.5 * k * np.square(s),
                  label=f"linear:k={k!r}")


def pure_power(p: float) -> NonlinearitySpec:
    """f(s) = s**p."""
    p = float(p)
    if not p > 0:
        raise DomainError("exponent must be positive")
    with np.errstate(divide="ignore"):
        return custom(lambda s: np.power(s, p),
                      lambda s: p * np.power(s, p - 1),
                      lambda s: np.power(s, p + 1) / (p + 1),
                      label=f"power:p={_fmt(p)}", smooth_origin=p >= 1)


_SPEC_RE = re.compile(r"^\s*(\w+)\s*(?::\s*(.*))?$")


def parse_spec(text: str) -> NonlinearitySpec:
    """Parse ``"plus:p=3,q=1"``, ``"minus:p=3,q=1"``, ``"power:p=5"`` or ``"linear:k=9.87"``."""
    m = _SPEC_RE.match(text)
    if not m:
        raise DomainError(f"cannot parse nonlinearity {text!r}")
    name, rest = m.group(1).lower(), m.group(2) or ""
    params = {}
    for item in filter(None, (s.strip() for s in rest.split(","))):
        key, sep, val = item.partition("=")
        if not sep:
            raise DomainError(f"malformed parameter {item!r} in {text!r}")
        try:
            params[key.strip()] = float(val)
        except ValueError:
            raise DomainError(f"parameter {key.strip()!r} is not a number: {val!r}") from None
    try:
        if name == "plus":
            return power_sum(params["p"], params["q"])
        if name == "minus":
            return power_diff(params["p"], params["q"])
        if name == "power":
            return pure_power(params["p"])
        if name == "linear":
            return linear(params.get("k", math.pi**2))
    except KeyError as exc:
        raise DomainError(f"missing parameter {exc.args[0]!r} in {text!r}") from None
    raise DomainError(f"unknown nonlinearity family {name!r}")


def eval(spec: NonlinearitySpec, s: float) -> tuple[float, float, float]:
    """Return ``(f(s), f'(s), F(s))``.

    f' is returned as a signed infinity at s = 0 when an exponent is below 1.
    """
    s = float(s)
    if not s >= 0:
        raise DomainError(f"nonlinearity is defined for s >= 0, got s={s}")
    if s == 0.0 and spec.kind is not Kind.CUSTOM:
        p, q, sg = spec.p, spec.q, spec.sign
        if q < 1:
            # s^(q-1) dominates s^(p-1) near the origin
            return 0.0, sg * math.inf, 0.0
        return 0.0, sg * float(q == 1), 0.0
    return float(spec.f(s)), float(spec.fprime(s)), float(spec.F(s))


# ---------------------------------------------------------------------------
# landmarks


def landmarks(spec: NonlinearitySpec, *, s_max: float = 1e4, samples: int = 4000) -> Landmarks:
    if spec.kind is Kind.PLUS:
        return Landmarks(0.0, 0.0, False)
    if spec.kind is Kind.MINUS:
        p, q = spec.p, spec.q
        beta = ((p + 1) / (q + 1)) ** (1.0 / (p - q))
        return Landmarks(1.0, beta, True, (1.0 - ROOT_XTOL, 1.0 + ROOT_XTOL),
                         (beta - ROOT_XTOL, beta + ROOT_XTOL))
    return _custom_landmarks(spec, s_max, samples)


def _custom_landmarks(spec, s_max, samples):
    s = np.geomspace(1e-8, s_max, samples)
    fs = np.asarray(spec.f(s), dtype=float)
    pos = fs > 0
    if pos.all():
        return Landmarks(0.0, 0.0, False)
    if not pos.any():
        raise StructureError("(f2): f is never positive on the sampled range")
    if pos[0]:
        raise StructureError("(f2): f is positive near 0 but not on the whole half-line")
    if not fs[0] < 0:
        raise StructureError("(f2): f must be negative on some interval (0, eps)")
    changes = np.flatnonzero(np.diff(pos.astype(int)))
    if len(changes) != 1:
        raise StructureError("(f2): f must change sign exactly once (single landmark B); "
                             f"found {len(changes)} sign changes")
    k = changes[0]
    f = lambda x: float(spec.f(x))
    B = optimize.brentq(f, s[k], s[k + 1], xtol=ROOT_XTOL)
    FB = float(spec.F(B))
    if not FB < 0:
        raise StructureError("(f2): F(B) must be negative so that beta > B exists")
    above = s[s > B]
    Fs = np.asarray(spec.F(above), dtype=float)
    hit = np.flatnonzero(Fs > 0)
    if not len(hit):
        raise StructureError("(f2): F has no zero above B on the sampled range")
    j = hit[0]
    lo = B if j == 0 else above[j - 1]
    beta = optimize.brentq(lambda x: float(spec.F(x)), lo, above[j], xtol=ROOT_XTOL)
    return Landmarks(B, beta, True, _bracket(f, B), _bracket(lambda x: float(spec.F(x)), beta))


def _bracket(g, x, width=ROOT_XTOL):
    lo, hi = x - width, x + width
    while np.sign(g(lo)) == np.sign(g(hi)) and hi - lo < 1e-6:
        lo, hi = x - 2 * (x - lo), x + 2 * (hi - x)
    return (lo, hi)


# ---------------------------------------------------------------------------
# conditions


@dataclass
class ConditionResult:
    condition: str
    verdict: str  # "holds" | "fails" | "assumed"
    witness_s: Optional[float]
    method: str  # "closed_form" | "sampling" | "assumed"
    sampled_verdict: Optional[str] = None
    detail: str = ""


@dataclass
class ConditionReport:
    spec_label: str
    n: int
    results: list[ConditionResult]

    def __getitem__(self, name: str) -> ConditionResult:
        for r in self.results:
            if r.condition == name:
                return r
        raise KeyError(name)

    def holds(self, name: str) -> bool:
        return self[name].verdict in ("holds", "assumed")

    def to_json(self) -> list[dict]:
        return [asdict(r) for r in self.results]


def sample_grid(lower: float, upper: float = 1e3, per_decade: int = 256) -> np.ndarray:
    lower = max(lower, 1e-6)
    decades = math.log10(upper / lower)
    count = max(2, int(math.ceil(decades * per_decade)) + 1)
    return np.geomspace(lower, upper, count)


def _density(grid: np.ndarray) -> float:
    g = np.asarray(grid, float)
    if g.ndim != 1 or len(g) < 2 or g[0] <= 0 or np.any(np.diff(g) <= 0):
        raise ResolutionError("sample grid must be a positive increasing 1-D array")
    return (len(g) - 1) / max(math.log10(g[-1] / g[0]), 1e-300)


def check_conditions(spec: NonlinearitySpec, n: int, grid=None, *, s_max: float = 1e3,
                     per_decade: int = 256, min_per_decade: int = 32) -> ConditionReport:
    """Decide (f1)-(f4) for ``spec`` in dimension ``n``.

    Sampling covers (max(beta, 1e-6), s_max] geometrically.  Power families
    are also decided in closed form; that verdict is authoritative and the
    sampled one is kept alongside for cross-checking.
    """
    if int(n) != n or n < 2:
        raise DomainError(f"dimension must be an integer >= 2, got {n}")
    n = int(n)
    lm = spec.landmarks
    lower = max(lm.beta, 1e-6) * (1 + 1e-12)
    if grid is None:
        grid = sample_grid(lower, s_max, per_decade)
    grid = np.asarray(grid, dtype=float)
    if _density(grid) < min_per_decade:
        raise ResolutionError(f"grid has {_density(grid):.1f} points per decade; "
                              f"at least {min_per_decade} are required")

    results = [_check_f1(spec), _check_f2(spec)]
    results.append(_check_f3(spec, n, grid[grid > lm.beta]))
    f4_grid = grid[grid > lm.B] if lm.B > 0 else grid
    if lm.B > 0:
        f4_grid = np.union1d(sample_grid(lm.B * (1 + 1e-9), lm.beta, per_decade), f4_grid)
    results.append(_check_f4(spec, f4_grid))
    return ConditionReport(spec.label, n, results)


def _check_f1(spec):
    if spec.kind is Kind.CUSTOM:
        return ConditionResult("f1", "assumed", None, "assumed",
                               detail="integrability of f' near 0 is not checked for custom f")
    return ConditionResult("f1", "holds", None, "closed_form",
                           detail="powers with positive exponents: f' ~ s^(q-1) is integrable on (0,1)")


def _check_f2(spec):
    try:
        lm = spec.landmarks
    except StructureError as exc:
        return ConditionResult("f2", "fails", None, "sampling", detail=str(exc))
    method = "sampling" if spec.kind is Kind.CUSTOM else "closed_form"
    return ConditionResult("f2", "holds", None, method, detail=f"B={lm.B!r}, beta={lm.beta!r}")


def _sampled_f3(spec, n, s):
    if len(s) == 0:
        return "holds", None
    margin = np.asarray(spec.F_over_f_prime(s), float) - (n - 2) / (2 * n)
    bad = np.flatnonzero(~(margin >= -SAMPLE_TIE_TOL))
    if len(bad):
        k = bad[np.argmin(margin[bad])]
        return "fails", float(s[k])
    return "holds", None


def _check_f3(spec, n, s):
    sampled, witness = _sampled_f3(spec, n, s)
    if spec.kind is Kind.PLUS:
        ok, w, detail = subcriticality_plus(spec.p, spec.q, n)
    elif spec.kind is Kind.MINUS:
        ok, w, detail = subcriticality_minus(spec.p, spec.q, n)
    else:
        return ConditionResult("f3", sampled, witness, "sampling", sampled)
    return ConditionResult("f3", "holds" if ok else "fails", w, "closed_form", sampled, detail)


def subcriticality_plus(p: float, q: float, n: int) -> tuple[bool, Optional[float], str]:
    """Closed-form (f3) for s**p + s**q (beta = 0).

    (F/f)' = 1 - g with g(s) = p/(p+1) + (p-q)/((p+1)(q+1)) h(s**(p-q)+1) and
    h(t) = (p-q-1)/t - (p-q)/t**2.  When p <= q+1, h < 0 increases to 0 so
    sup g = p/(p+1) (not attained); otherwise h peaks at t* = 2(p-q)/(p-q-1)
    and sup g = (p+q+1)**2 / (4(p+1)(q+1)).
    """
    d = p - q
    if p <= q + 1:
        ok = n == 2 or p <= (n + 2) / (n - 2)
        detail = "sup g = p/(p+1) approached as s -> infinity"
        if ok:
            return True, None, detail
        # g(s) = bound  <=>  H t^2 - (d-1) t + d = 0 with H < 0; g exceeds it beyond the root
        bound = (n + 2) / (2 * n)
        H = (bound - p / (p + 1)) * (p + 1) * (q + 1) / d
        disc = (d - 1) ** 2 - 4 * H * d
        t0 = ((d - 1) - math.sqrt(disc)) / (2 * H)
        return False, (max(2 * t0, 2.0) - 1) ** (1 / d), detail
    sup = (p + q + 1) ** 2 / (4 * (p + 1) * (q + 1))
    tstar = 2 * d / (d - 1)
    sstar = (tstar - 1) ** (1 / d)
    ok = (p + q + 1) ** 2 * n <= 2 * (n + 2) * (p + 1) * (q + 1) * (1 + 1e-14)
    detail = f"sup g = {sup!r} attained at s = {sstar!r}"
    return ok, (None if ok else sstar), detail


def subcriticality_minus(p: float, q: float, n: int) -> tuple[bool, Optional[float], str]:
    """Closed-form (f3) for s**p - s**q on s > beta.

    With t = s**(p-q) and x = 1/(t-1),
    (F/f)' = 1/(p+1) + (p-q)(p-q-1)/K x + (p-q)**2/K x**2, K = (p+1)(q+1).
    """
    d = p - q
    K = (p + 1) * (q + 1)
    bound = 0.0 if n == 2 else (n - 2) / (2 * n)
    x_max = (q + 1) / d  # s > beta  <=>  0 < x < x_max

    def s_of(x):
        return (1 + 1 / x) ** (1 / d)

    if p >= q + 1:
        ok = n == 2 or p <= (n + 2) / (n - 2)
        detail = "inf (F/f)' = 1/(p+1) approached as s -> infinity"
        if ok:
            return True, None, detail
        A, Bc, C = 1 / (p + 1) - bound, d * (d - 1) / K, d * d / K
        x0 = (-Bc + math.sqrt(Bc * Bc - 4 * C * A)) / (2 * C)
        return False, s_of(min(x0, x_max) / 2), detail
    low = (1 - (q + 1 - p) ** 2 / (4 * (q + 1))) / (p + 1)
    xstar = (q + 1 - p) / (2 * d)
    ok = low >= bound - 1e-14
    detail = f"min (F/f)' = {low!r} attained at s = {s_of(xstar)!r}"
    return ok, (None if ok else s_of(xstar)), detail


def superlinearity_polynomial(p: float, q: float, s):
    """g(s) = (p-1)s^(p-q+1) - p s^(p-q) - (q-1)s + q; f'(s)(s-1) - f(s) = s^(q-1) g(s)."""
    s = np.asarray(s, float)
    return (p - 1) * s ** (p - q + 1) - p * s ** (p - q) - (q - 1) * s + q


def _sampled_f4(spec, s):
    B = spec.landmarks.B
    s = s[s > B]
    if len(s) == 0:
        return "holds", None
    fs = np.asarray(spec.f(s), float)
    margin = np.asarray(spec.fprime(s), float) * (s - B) - fs
    scale = np.maximum(np.abs(fs), 1.0)
    bad = np.flatnonzero(~(margin >= -SAMPLE_TIE_TOL * scale))
    if len(bad):
        return "fails", float(s[bad[np.argmin(margin[bad] / scale[bad])]])
    return "holds", None


def _check_f4(spec, s):
    sampled, witness = _sampled_f4(spec, s)
    p, q = spec.p, spec.q
    if spec.kind is Kind.PLUS:
        # f'(s) s - f(s) = (p-1)s^p + (q-1)s^q
        if p >= 1 and q >= 1:
            return ConditionResult("f4", "holds", None, "closed_form", sampled,
                                   "(p-1)s^p + (q-1)s^q >= 0 for p, q >= 1")
        w = 1.0 if p <= 1 else 0.5 * ((1 - q) / (p - 1)) ** (1 / (p - q))
        return ConditionResult("f4", "fails", w, "closed_form", sampled,
                               "(p-1)s^p + (q-1)s^q < 0 near s = 0")
    if spec.kind is Kind.MINUS and p > 1:
        # g(1) = g'(1) = 0 and g'' > 0 on (1, inf): the bracket in g'' is
        # increasing in s for p > 1 and equals p + q - 1 > 0 at s = 1
        g1 = float(superlinearity_polynomial(p, q, 1.0))
        gpp1 = (p - q) * (p + q - 1)
        gs = superlinearity_polynomial(p, q, s[s > 1])
        ok = abs(g1) < 1e-12 and gpp1 > 0 and bool(np.all(gs > -SAMPLE_TIE_TOL))
        return ConditionResult("f4", "holds" if ok else "fails", None if ok else witness,
                               "closed_form", sampled,
                               f"g(1)=0, g'(1)=0, g''(1)=(p-q)(p+q-1)={gpp1!r}, g convex on (1,inf)")
    return ConditionResult("f4", sampled, witness, "sampling", sampled)
