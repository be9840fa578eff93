"""Closed-form uniqueness regions for f = s^p + s^q and f = s^p - s^q.

Conditions are checked in their listed order and the first match is
reported.  Bounds are inclusive wherever the region is written with <=.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Optional, Sequence

import numpy as np
from scipy import optimize

from .errors import DomainError

PLUS = "plus"
MINUS = "minus"
OUTSIDE = "OutsideAllConditions"


def critical_exponent(n: float) -> float:
    """(n+2)/(n-2); infinite for n = 2."""
    return math.inf if n == 2 else (n + 2) / (n - 2)


def q_cap(n: float) -> float:
    """(4 + sqrt(2n(n+2))) / (2(n-2)), the upper q limit of the minus region."""
    _need_n_above_2(n)
    return (4 + math.sqrt(2 * n * (n + 2))) / (2 * (n - 2))


def _need_n_above_2(n):
    if not n > 2:
        raise DomainError(f"the boundary curves need n > 2, got n={n}")


def _radicand(n: float, q: float) -> float:
    _need_n_above_2(n)
    if not q > 0:
        raise DomainError(f"q must be positive, got {q}")
    rad = (n + 2) * (q + 1) * (n + 2 - (n - 2) * q)
    if not rad > 0:
        raise DomainError(f"radicand is not positive for q={q} (needs q < (n+2)/(n-2) = {critical_exponent(n):g})")
    return rad


def P_upper(n: float, q: float) -> float:
    """P(q) = (2(q+1) + sqrt((n+2)(q+1)(n+2-(n-2)q))) / n."""
    return (2 * (q + 1) + math.sqrt(_radicand(n, q))) / n


def P_lower(n: float, q: float) -> float:
    """P_-(q) = (2(q+1) - sqrt((n+2)(q+1)(n+2-(n-2)q))) / n."""
    return (2 * (q + 1) - math.sqrt(_radicand(n, q))) / n


def _safe(fun, n, q) -> Optional[float]:
    try:
        return fun(n, q)
    except DomainError:
        return None


@dataclass(frozen=True)
class RegionVerdict:
    family: str
    n: float
    p: float
    q: float
    verdict: str  # "UniqueByCondition" or OutsideAllConditions
    label: Optional[str]  # "i", "ii", ... when a condition fired
    P_of_q: Optional[float]
    P_minus_of_q: Optional[float]
    critical_exponent: float
    q_cap: Optional[float]
    finite_b_applies: Optional[bool] = None  # minus family only
    note: str = ""

    @property
    def unique(self) -> bool:
        return self.verdict == "UniqueByCondition"

    @property
    def display(self) -> str:
        return f"UniqueByCondition({self.label})" if self.unique else OUTSIDE

    def to_dict(self) -> dict:
        d = asdict(self)
        d["critical_exponent"] = None if math.isinf(self.critical_exponent) else self.critical_exponent
        d["display"] = self.display
        return d


def _check(n, p, q):
    if not (n >= 2 and float(n) == int(n)):
        raise DomainError(f"n must be an integer >= 2, got {n}")
    if not (p > q > 0):
        raise DomainError(f"exponents must satisfy p > q > 0, got p={p}, q={q}")


def _boundaries(n, q):
    if n == 2:
        return None, None, math.inf, None
    return _safe(P_upper, n, q), _safe(P_lower, n, q), critical_exponent(n), q_cap(n)


def plus_conditions(n: float, p: float, q: float) -> list[tuple[str, bool]]:
    """Each condition of the s^p + s^q family with its truth value."""
    crit = critical_exponent(n)
    P = _safe(P_upper, n, q) if n > 2 else None
    return [
        ("i", n >= 6 and 1 <= q < p <= crit),
        ("ii", 2 < n < 6 and 4 / (n - 2) <= q < p <= crit),
        ("iii", 2 < n < 6 and 0 < q < 4 / (n - 2) and P is not None and q < p <= P),
        ("iv", n == 2 and 0 < q < p <= q + 1 + 2 * math.sqrt(q + 1)),
    ]


def minus_conditions(n: float, p: float, q: float) -> list[tuple[str, bool]]:
    """Each condition of the s^p - s^q family with its truth value."""
    if n == 2:
        return [("i", False), ("ii", False), ("iii", 0 < q < p)]
    crit = critical_exponent(n)
    cap = q_cap(n)
    P = _safe(P_upper, n, q)
    return [
        ("i", 0 < q <= 4 / (n - 2) and q < p <= crit),
        ("ii", 4 / (n - 2) < q < cap and P is not None and q < p <= P),
        ("iii", False),
    ]


def classify_plus(n: float, p: float, q: float) -> RegionVerdict:
    """First matching condition for f = s^p + s^q.

    The regions are stated for p > 1; below that the verdict is Outside with
    a note, since the finite-annulus statement needs superlinearity.
    """
    _check(n, p, q)
    P, Pm, crit, cap = _boundaries(n, q)
    if not p > 1:
        return RegionVerdict(PLUS, n, p, q, OUTSIDE, None, P, Pm, crit, cap,
                             note="regions for s^p + s^q assume p > 1")
    for label, ok in plus_conditions(n, p, q):
        if ok:
            return RegionVerdict(PLUS, n, p, q, "UniqueByCondition", label, P, Pm, crit, cap)
    return RegionVerdict(PLUS, n, p, q, OUTSIDE, None, P, Pm, crit, cap)


def classify_minus(n: float, p: float, q: float) -> RegionVerdict:
    """First matching condition for f = s^p - s^q.

    The conditions give uniqueness on exterior domains; ``finite_b_applies``
    records whether the finite-annulus statement (which needs p > 1) does too.
    """
    _check(n, p, q)
    P, Pm, crit, cap = _boundaries(n, q)
    for label, ok in minus_conditions(n, p, q):
        if ok:
            return RegionVerdict(MINUS, n, p, q, "UniqueByCondition", label, P, Pm, crit, cap,
                                 finite_b_applies=p > 1)
    return RegionVerdict(MINUS, n, p, q, OUTSIDE, None, P, Pm, crit, cap, finite_b_applies=False)


def classify(family: str, n: float, p: float, q: float) -> RegionVerdict:
    if family == PLUS:
        return classify_plus(n, p, q)
    if family == MINUS:
        return classify_minus(n, p, q)
    raise DomainError(f"family must be 'plus' or 'minus', got {family!r}")


@dataclass(frozen=True)
class BoundaryTable:
    n: float
    family: str
    q: np.ndarray
    P: np.ndarray
    P_minus: np.ndarray
    critical_exponent: float
    argmax_q: float  # grid maximizer of P(q)
    refined_argmax_q: float  # bounded Brent maximizer on the grid range
    empirical_inf: float  # smallest tabulated P(q) on (0, 4/(n-2))

    def rows(self):
        for q, P, Pm in zip(self.q, self.P, self.P_minus):
            yield float(q), float(P), float(Pm), self.critical_exponent


def region_boundary_csv(n: float, family: str, q_grid: Sequence[float]) -> BoundaryTable:
    """Tabulate P(q), P_-(q) and the critical exponent over ``q_grid``."""
    if family not in (PLUS, MINUS):
        raise DomainError(f"family must be 'plus' or 'minus', got {family!r}")
    q = np.asarray(q_grid, dtype=float)
    if q.ndim != 1 or q.size < 2 or np.any(np.diff(q) <= 0):
        raise DomainError("q grid must be strictly increasing with at least two points")
    for x in (q[0], q[-1]):
        _radicand(n, x)
    P = np.array([P_upper(n, x) for x in q])
    Pm = np.array([P_lower(n, x) for x in q])
    k = int(np.argmax(P))
    res = optimize.minimize_scalar(lambda x: -P_upper(n, x), bounds=(q[0], q[-1]), method="bounded",
                                   options={"xatol": 1e-12})
    lower = q < 4 / (n - 2)
    inf = float(P[lower].min()) if lower.any() else math.nan
    return BoundaryTable(n, family, q, P, Pm, critical_exponent(n), float(q[k]), float(res.x), inf)
