"""Command-line entry point.

Every subcommand validates its inputs before computing, writes its files
atomically, and prints one JSON line summarising the run.  Exit status is 0
on success and otherwise the ``exit_code`` of the raised error class.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
import tempfile
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from . import __version__
from . import functionals as fn
from . import regions
from . import shooting
from .errors import AnnulusError, DomainError
from .nonlinearity import check_conditions, parse_spec
from .radial_ode import IntegratorControls, RadialProblem, SolutionProfile, integrate

INTERNAL_ERROR = 1

# flags each subcommand cannot run without (checked after merging --config)
REQUIRED = {
    "solve": ("n", "a", "f"),
    "scan": ("n", "a", "b", "f"),
    "exterior": ("n", "a", "f"),
    "functionals": ("profile",),
    "compare": ("p1", "p2"),
    "region": ("family", "n", "p", "q"),
    "region-curve": ("family", "n"),
    "conditions": ("n", "f"),
}


# ---------------------------------------------------------------------------
# formatting and files


def fmt(x) -> str:
    """Shortest round-trip text for a float ('.' separator, no locale)."""
    if x is None:
        return "nan"
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, str):
        return x
    return repr(float(x))


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return [_jsonable(v) for v in x.tolist()]
    if isinstance(x, (np.bool_,)):
        return bool(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if math.isfinite(x) else None
    return x


def dumps(obj) -> str:
    return json.dumps(_jsonable(obj), sort_keys=True, allow_nan=False)


def write_atomic(path: Path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "w", newline="", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def csv_text(header: Sequence[str], rows: Iterable[Sequence]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([fmt(v) for v in row])
    return buf.getvalue()


def sidecar_path(path: Path) -> Path:
    path = Path(path)
    return path.with_name(path.name + ".json")


def profile_files(profile: SolutionProfile, integration: dict) -> tuple[str, str]:
    """CSV (r, u, u_prime, I) and the JSON sidecar for one profile."""
    prob = profile.problem
    rows = zip(profile.r, profile.u, profile.v, profile.energy)
    ev = profile.events
    side = {
        "n": prob.n, "a": prob.a, "b": None if prob.exterior else prob.b, "exterior": prob.exterior,
        "f": prob.spec.label, "alpha": profile.alpha, "termination": profile.termination.value,
        "controls": {"rtol": profile.controls.rtol, "atol": profile.controls.atol,
                     "r_max": profile.controls.r_max},
        "integration": integration,
        "events": {"peak": list(ev.peak) if ev.peak else None, "zero": ev.zero, "bounce": ev.bounce,
                   "level_crossings": [[c.level, c.r, c.branch] for c in ev.level_crossings]},
        "message": profile.message,
    }
    return csv_text(("r", "u", "u_prime", "I"), rows), dumps(side) + "\n"


def load_profile(path: Path) -> SolutionProfile:
    """Re-integrate the profile described by the sidecar next to ``path``."""
    side_file = sidecar_path(path)
    if not side_file.exists():
        raise DomainError(f"profile sidecar {side_file} not found")
    side = json.loads(side_file.read_text(encoding="utf-8"))
    spec = parse_spec(side["f"])
    b = math.inf if side.get("exterior") else float(side["b"])
    prob = RadialProblem(int(side["n"]), float(side["a"]), b, spec)
    ctrl = IntegratorControls(rtol=side["controls"]["rtol"], atol=side["controls"]["atol"],
                              r_max=side["controls"].get("r_max"))
    it = side.get("integration", {})
    return integrate(prob, float(side["alpha"]), ctrl, r_end=it.get("r_end"),
                     stop_on_zero=it.get("stop_on_zero", True), stop_on_bounce=it.get("stop_on_bounce", True))


# ---------------------------------------------------------------------------
# argument parsing


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="flat key = value file mirroring the flags")
    common.add_argument("--dry-run", action="store_true", default=None,
                        help="validate and print the plan without computing")
    common.add_argument("--rtol", type=float, default=1e-10)
    common.add_argument("--atol", type=float, default=1e-12)

    prob = argparse.ArgumentParser(add_help=False)
    prob.add_argument("--n", type=int)
    prob.add_argument("--a", type=float)
    prob.add_argument("--f", help='nonlinearity, e.g. "plus:p=3,q=1" or "minus:p=3,q=1"')

    ap = argparse.ArgumentParser(prog="annulus", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", parents=[common, prob], help="integrate one slope or solve a finite annulus")
    p.add_argument("--b", type=float, help="outer radius (omit with --alpha for a free IVP)")
    p.add_argument("--alpha", type=float, help="initial slope; without it the boundary value problem is solved")
    p.add_argument("--rmax", type=float)
    p.add_argument("--alpha-min", type=float, default=1e-3)
    p.add_argument("--alpha-max", type=float, default=1e3)
    p.add_argument("--grid", type=int, default=512)
    p.add_argument("--out", help="profile CSV (a JSON sidecar is written next to it)")

    p = sub.add_parser("scan", parents=[common, prob], help="tabulate the first-zero map and count solutions")
    p.add_argument("--b", type=float)
    p.add_argument("--alpha-min", type=float, default=1e-3)
    p.add_argument("--alpha-max", type=float, default=1e3)
    p.add_argument("--grid", type=int, default=512)
    p.add_argument("--out", help="scan CSV (alpha, b_of_alpha, classification, u_at_b)")

    p = sub.add_parser("exterior", parents=[common, prob], help="ground state on (a, inf) by bisection")
    p.add_argument("--alpha-min", type=float, default=1e-3)
    p.add_argument("--alpha-max", type=float, default=1e3)
    p.add_argument("--grid", type=int, default=64)
    p.add_argument("--rmax", type=float)
    p.add_argument("--out", help="ground-state profile CSV")

    p = sub.add_parser("functionals", parents=[common], help="V, P, Pbar, W along a saved profile")
    p.add_argument("--profile")
    p.add_argument("--points", type=int, default=512)
    p.add_argument("--out")

    p = sub.add_parser("compare", parents=[common], help="step inequalities on two saved profiles")
    p.add_argument("--p1")
    p.add_argument("--p2")
    p.add_argument("--mode", choices=("finite", "exterior"), default="finite")
    p.add_argument("--out")

    p = sub.add_parser("region", parents=[common], help="classify (n, p, q) against the uniqueness regions")
    p.add_argument("--family", choices=(regions.PLUS, regions.MINUS))
    p.add_argument("--n", type=int)
    p.add_argument("--p", type=float)
    p.add_argument("--q", type=float)

    p = sub.add_parser("region-curve", parents=[common], help="tabulate P(q) and P_-(q)")
    p.add_argument("--family", choices=(regions.PLUS, regions.MINUS))
    p.add_argument("--n", type=int)
    p.add_argument("--q-min", type=float, default=0.05)
    p.add_argument("--q-max", type=float)
    p.add_argument("--steps", type=int, default=400)
    p.add_argument("--out")

    p = sub.add_parser("conditions", parents=[common], help="check (f1)-(f4) for a nonlinearity")
    p.add_argument("--n", type=int)
    p.add_argument("--f")
    p.add_argument("--s-max", type=float, default=1e3)
    p.add_argument("--per-decade", type=int, default=256)
    return ap


def read_config(path: str) -> dict:
    values = {}
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise DomainError(f"cannot read config {path}: {exc.strerror}") from None
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line or line.startswith("["):
            continue
        key, sep, val = line.partition("=")
        if not sep:
            raise DomainError(f"{path}:{lineno}: expected key = value")
        values[key.strip().replace("-", "_")] = val.strip().strip("'\"")
    return values


def merge_config(parser: argparse.ArgumentParser, ns: argparse.Namespace, argv: Sequence[str]) -> None:
    """Fill options not given on the command line from the --config file."""
    if not ns.config:
        return
    sub = next(a for a in parser._actions if isinstance(a, argparse._SubParsersAction)).choices[ns.command]
    actions = {a.dest: a for a in sub._actions if a.dest != "help"}
    given = {a.dest for a in sub._actions for opt in a.option_strings
             if any(arg == opt or arg.startswith(opt + "=") for arg in argv)}
    for key, text in read_config(ns.config).items():
        if key not in actions or key in ("config",):
            raise DomainError(f"unknown config key {key!r} for {ns.command}")
        if key in given:
            continue
        act = actions[key]
        if isinstance(act, argparse._StoreTrueAction):
            value = text.lower() in ("1", "true", "yes", "on")
        else:
            try:
                value = act.type(text) if act.type else text
            except ValueError:
                raise DomainError(f"config key {key!r}: cannot convert {text!r}") from None
            if act.choices and value not in act.choices:
                raise DomainError(f"config key {key!r}: {value!r} not in {list(act.choices)}")
        setattr(ns, key, value)


def _controls(ns, r_max=None) -> IntegratorControls:
    return IntegratorControls(rtol=ns.rtol, atol=ns.atol, r_max=r_max)


def _problem(ns, b=None) -> RadialProblem:
    return RadialProblem(ns.n, ns.a, math.inf if b is None else b, parse_spec(ns.f))


# ---------------------------------------------------------------------------
# subcommands: each returns (summary, {path: text}) or raises


def _plan(ns) -> dict:
    return {k: v for k, v in vars(ns).items() if k not in ("dry_run",)}


def cmd_solve(ns, dry):
    if ns.alpha is None and ns.b is None:
        raise DomainError("solve needs --alpha (initial value problem) or --b (boundary value problem)")
    if ns.alpha is not None and not ns.alpha > 0:
        raise DomainError(f"--alpha must be positive, got {ns.alpha}")
    b = ns.b if ns.b is not None and math.isfinite(ns.b) else None
    prob = _problem(ns, b)
    ctrl = _controls(ns, ns.rmax)
    if ns.alpha is None:
        if b is None:
            raise DomainError("solve without --alpha needs a finite --b; use 'exterior' for b = inf")
        shooting._check_range(ns.alpha_min, ns.alpha_max, ns.grid)
    if dry:
        return {"plan": _plan(ns)}, {}
    files = {}
    if ns.alpha is not None:
        integration = {"r_end": b, "stop_on_zero": True, "stop_on_bounce": True}
        prof = integrate(prob, ns.alpha, ctrl, r_end=b)
        summary = {"alpha": ns.alpha, "termination": prof.termination.value,
                   "peak": prof.events.peak, "zero": prof.events.zero, "bounce": prof.events.bounce,
                   "r_end": prof.r[-1], "nodes": len(prof.r)}
        if ns.out:
            csv_body, side = profile_files(prof, integration)
            files[Path(ns.out)] = csv_body
            files[sidecar_path(ns.out)] = side
        return summary, files
    result = shooting.solve_annulus(prob, ctrl, alpha_min=ns.alpha_min, alpha_max=ns.alpha_max,
                                    grid=ns.grid, workers=shooting.default_workers())
    summary = {"continuum_flag": result.continuum, "count": result.count, "alphas": result.alphas,
               "residuals": [s.residual for s in result.solutions], "brackets": result.brackets_used,
               "alpha_range": result.alpha_range}
    if ns.out and result.solutions:
        out = Path(ns.out)
        integration = {"r_end": prob.b + 1e-6 * (prob.b - prob.a), "stop_on_zero": False,
                       "stop_on_bounce": False}
        for k, sol in enumerate(result.solutions):
            path = out if result.count == 1 else out.with_name(f"{out.stem}_{k}{out.suffix}")
            csv_body, side = profile_files(sol.profile, integration)
            files[path] = csv_body
            files[sidecar_path(path)] = side
    return summary, files


def cmd_scan(ns, dry):
    prob = _problem(ns, ns.b)
    if prob.exterior:
        raise DomainError("scan needs a finite --b")
    shooting._check_range(ns.alpha_min, ns.alpha_max, ns.grid)
    ctrl = _controls(ns)
    if dry:
        return {"plan": _plan(ns)}, {}
    result = shooting.solve_annulus(prob, ctrl, alpha_min=ns.alpha_min, alpha_max=ns.alpha_max,
                                    grid=ns.grid, workers=shooting.default_workers())
    rows = [(p.alpha, p.b_of_alpha, p.classification, p.u_at_b) for p in result.scan]
    files = {Path(ns.out): csv_text(("alpha", "b_of_alpha", "classification", "u_at_b"), rows)} if ns.out else {}
    summary = {"continuum_flag": result.continuum, "count": result.count, "alphas": result.alphas,
               "sign_changes": len(result.brackets_used), "alpha_range": result.alpha_range}
    return summary, files


def cmd_exterior(ns, dry):
    prob = _problem(ns)
    shooting._check_range(ns.alpha_min, ns.alpha_max, ns.grid)
    ctrl = _controls(ns)
    if dry:
        return {"plan": _plan(ns)}, {}
    result = shooting.solve_exterior(prob, ctrl, alpha_min=ns.alpha_min, alpha_max=ns.alpha_max,
                                     grid=ns.grid, r_max=ns.rmax)
    sols = []
    for s in result.solutions:
        t = s.tail
        sols.append({"alpha_star": s.alpha_star, "bracket": s.bracket, "width": s.residual,
                     "accepted": s.accepted, "r_end": s.profile.r[-1],
                     "tail": None if t is None else {"L_estimate": t.L_estimate, "ru_prime": t.ru_prime_tail,
                                                     "flux_monotone": t.flux_monotone,
                                                     "ru_decreasing": t.ru_decreasing, "u_end": t.u_end}})
    files = {}
    if ns.out and result.solutions:
        csv_body, side = profile_files(result.solutions[0].profile, {"r_end": None, "stop_on_zero": True,
                                                                     "stop_on_bounce": True})
        files[Path(ns.out)] = csv_body
        files[sidecar_path(ns.out)] = side
    return {"count": result.count, "solutions": sols, "bisection_steps": len(result.history)}, files


def cmd_functionals(ns, dry):
    if not ns.points >= 3:
        raise DomainError("--points must be at least 3")
    if not sidecar_path(ns.profile).exists():
        raise DomainError(f"profile sidecar {sidecar_path(ns.profile)} not found")
    if dry:
        return {"plan": _plan(ns)}, {}
    prof = load_profile(Path(ns.profile))
    prob = prof.problem
    br = fn.invert_branches(prof)
    s = np.linspace(br.M, 0.0, ns.points)
    tr = fn.eval_functionals(br, prob.spec, prob.n, s)
    h = 1e-4 * br.M
    V_fd = np.full_like(s, np.nan)
    P_fd = np.full_like(s, np.nan)
    ok = (s - h > 0) & (s + h < br.M)
    B = prob.spec.landmarks.B
    if B > 0:
        ok &= np.abs(s - B) > h + fn.GUARD_BAND
    if ok.any():
        V_fd[ok] = fn.richardson_derivative(
            lambda x: fn.functional_values(br.rising, prob.spec, prob.n, x)["V"], s[ok], h)
        P_fd[ok] = fn.richardson_derivative(
            lambda x: fn.functional_values(br.rising, prob.spec, prob.n, x)["P"], s[ok], h)
    rows = zip(s, tr.V, tr.P, tr.Pbar, tr.W, V_fd, P_fd, tr.V_prime_formula, tr.P_prime_formula)
    header = ("s", "V", "P", "Pbar", "W", "V_fd", "P_fd", "V_prime", "P_prime")
    files = {Path(ns.out): csv_text(header, rows)} if ns.out else {}
    summary = {"M": br.M, "c": br.c, "points": ns.points, "guard_excluded": tr.guard_excluded,
               "falling_truncated": tr.truncated, "P_at_M": float(tr.P[0])}
    return summary, files


def cmd_compare(ns, dry):
    for p in (ns.p1, ns.p2):
        if not sidecar_path(p).exists():
            raise DomainError(f"profile sidecar {sidecar_path(p)} not found")
    if dry:
        return {"plan": _plan(ns)}, {}
    p1, p2 = load_profile(Path(ns.p1)), load_profile(Path(ns.p2))
    report = fn.compare_pair(p1, p2, ns.mode)
    body = report.to_dict()
    files = {Path(ns.out): dumps(body) + "\n"} if ns.out else {}
    verdicts = {k: v["status"] for k, v in body["steps"].items()}
    return {"premise_class": report.premise_class, "s_I": report.s_I, "steps": verdicts}, files


def cmd_region(ns, dry):
    if dry:
        regions.classify(ns.family, ns.n, ns.p, ns.q)  # validation only
        return {"plan": _plan(ns)}, {}
    return regions.classify(ns.family, ns.n, ns.p, ns.q).to_dict(), {}


def cmd_region_curve(ns, dry):
    q_max = ns.q_max
    if q_max is None:
        q_max = regions.q_cap(ns.n) * (1 - 1e-9)
    if not (ns.steps >= 2 and 0 < ns.q_min < q_max):
        raise DomainError("need 0 < q-min < q-max and steps >= 2")
    grid = np.linspace(ns.q_min, q_max, ns.steps)
    regions.P_upper(ns.n, grid[0]), regions.P_upper(ns.n, grid[-1])
    if dry:
        return {"plan": _plan(ns)}, {}
    table = regions.region_boundary_csv(ns.n, ns.family, grid)
    files = {}
    if ns.out:
        files[Path(ns.out)] = csv_text(("q", "P", "P_minus", "critical_exponent"), table.rows())
    return {"argmax_q": table.argmax_q, "refined_argmax_q": table.refined_argmax_q,
            "expected_argmax_q": 4 / (ns.n - 2), "empirical_inf_below_argmax": table.empirical_inf,
            "rows": len(grid)}, files


def cmd_conditions(ns, dry):
    spec = parse_spec(ns.f)
    if dry:
        return {"plan": _plan(ns)}, {}
    report = check_conditions(spec, ns.n, s_max=ns.s_max, per_decade=ns.per_decade)
    return {"f": spec.label, "n": ns.n, "conditions": report.to_json(),
            "all_hold": all(report.holds(k) for k in ("f1", "f2", "f3", "f4"))}, {}


COMMANDS = {"solve": cmd_solve, "scan": cmd_scan, "exterior": cmd_exterior, "functionals": cmd_functionals,
            "compare": cmd_compare, "region": cmd_region, "region-curve": cmd_region_curve,
            "conditions": cmd_conditions}


def run(argv: Optional[Sequence[str]] = None, stdout=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    stdout = sys.stdout if stdout is None else stdout
    parser = build_parser()
    ns = parser.parse_args(argv)
    command = ns.command
    try:
        merge_config(parser, ns, argv)
        missing = [k for k in REQUIRED[command] if getattr(ns, k, None) is None]
        if missing:
            raise DomainError(f"missing required option(s): {', '.join('--' + m.replace('_', '-') for m in missing)}")
        summary, files = COMMANDS[command](ns, bool(ns.dry_run))
    except AnnulusError as exc:
        print(dumps({"command": command, "status": "error", "error": type(exc).__name__, "message": str(exc)}),
              file=stdout)
        print(f"annulus {command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code
    except Exception as exc:  # surfaced as an internal error with its own status
        print(dumps({"command": command, "status": "error", "error": "InternalError",
                     "message": f"{type(exc).__name__}: {exc}"}), file=stdout)
        print(f"annulus {command}: internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return INTERNAL_ERROR
    for path, text in files.items():
        write_atomic(path, text)
    line = {"command": command, "status": "ok", "dry_run": bool(ns.dry_run), **summary}
    if files:
        line["outputs"] = sorted(str(p) for p in files)
    print(dumps(line), file=stdout)
    return 0


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
