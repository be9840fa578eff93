"""Best-effort search for annuli carrying several positive solutions.

For f = s^p + s^q with p subcritical and q supercritical (default s^2 + s^7
in dimension 3), small inner radii make the first-zero map b(alpha)
oscillate.  For each candidate a the script tabulates b(alpha), picks the
midpoint between a local minimum and the following local maximum, and
counts solutions on (a, b) with the shooting scan.

    python scripts/multiplicity_search.py --n 3 --f "plus:p=7,q=2"
"""

from __future__ import annotations

import argparse
import json

import numpy as np

from annulus.nonlinearity import parse_spec
from annulus.radial_ode import RadialProblem
from annulus.shooting import count_solutions, first_zero_map


def folds(alphas, bs):
    """(alpha, b, kind) at interior extrema of a sampled b(alpha)."""
    out = []
    for k in range(1, len(bs) - 1):
        lo, mid, hi = bs[k - 1], bs[k], bs[k + 1]
        if not np.isfinite([lo, mid, hi]).all():
            continue
        if mid < lo and mid < hi:
            out.append((float(alphas[k]), float(mid), "min"))
        elif mid > lo and mid > hi:
            out.append((float(alphas[k]), float(mid), "max"))
    return out


def candidate_b(fold_list):
    for (a1, b1, k1), (a2, b2, k2) in zip(fold_list, fold_list[1:]):
        if k1 == "min" and k2 == "max":
            return 0.5 * (b1 + b2), (a1, a2)
    return None, None


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=3)
    ap.add_argument("--f", default="plus:p=7,q=2")
    ap.add_argument("--a", type=float, nargs="*", default=[0.05, 0.02, 0.01, 0.005])
    ap.add_argument("--alpha-min", type=float, default=1e-1)
    ap.add_argument("--alpha-max", type=float, default=1e4)
    ap.add_argument("--probe", type=int, default=200)
    ap.add_argument("--grid", type=int, default=512)
    args = ap.parse_args(argv)
    spec = parse_spec(args.f)
    alphas = np.geomspace(args.alpha_min, args.alpha_max, args.probe)
    for a in args.a:
        probe = RadialProblem(args.n, a, 2.0 * a + 1.0, spec)
        bs = np.array([b if isinstance(b, float) else np.nan
                       for b in (first_zero_map(probe, x) for x in alphas)])
        fl = folds(alphas, bs)
        b, window = candidate_b(fl)
        record = {"a": a, "folds": fl, "b": b}
        if b is not None:
            count, result = count_solutions(RadialProblem(args.n, a, b, spec),
                                            (args.alpha_min, args.alpha_max), args.grid)
            record.update(count=count, alphas=result.alphas, fold_alpha_window=window)
        print(json.dumps(record))


if __name__ == "__main__":
    main()
