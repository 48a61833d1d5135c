"""Command-line front end.

Exit codes: 0 success, 1 a condition or estimate was falsified, 2 usage or
configuration error, 3 numerical failure (non-convergence, singular symbol).
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys

import numpy as np

from . import __version__
from . import io as fio
from .conditions import ConditionViolation, EvaluatorError, check_ak, check_k, check_pm, lipschitz_bound
from .core import GridSpec, NormKind, RealFieldError, VectorField, get_threads, norm, set_threads
from .ellipticity import EllipticityConsistencyError, nu as compute_nu
from .problems import (
    BUILTIN_FAMILIES,
    BUILTIN_TENSORS,
    ProblemSpec,
    RegressionFailure,
    builtin_F,
    gaussian_sum,
    manufactured,
    random_band_limited,
    reproduce_example,
    resolve_tensor,
)
from .solver import (
    EstimateViolation,
    LinearSolveOptions,
    NonConvergenceError,
    SingularSymbolError,
    ZeroModeError,
    apply_operator,
    picard_solve,
    solve_linear,
    verify_comparison,
)

EXIT_OK, EXIT_FALSIFIED, EXIT_USAGE, EXIT_NUMERICAL = 0, 1, 2, 3


class Falsified(Exception):
    pass


def _dump_json(obj, path=None):
    text = json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n"
    if path:
        with open(path, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer, np.bool_)):
        return o.item()
    raise TypeError(f"not JSON serializable: {type(o)}")


def _write_table(path, header, rows, provenance):
    buf = io.StringIO()
    buf.write("# " + json.dumps(provenance, sort_keys=True) + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([repr(v) if isinstance(v, float) else v for v in r])
    with open(path, "w") as fh:
        fh.write(buf.getvalue())


def _parse_grid(text):
    parts = text.split(",")
    if len(parts) != 3:
        raise ValueError("--grid expects n,M,L")
    return GridSpec.cube(int(parts[0]), int(parts[1]), float(parts[2]))


def _sampler(spec, samples, seed):
    s = spec.sampler_obj()
    if seed is not None:
        s.seed = seed
    if samples is not None:
        s.n_XY = max(1, math.ceil(samples / (s.n_x * len(s.magnitudes) ** 2)))
    return s


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def cmd_ellipticity(args):
    A = resolve_tensor(args.tensor)
    rep = compute_nu(A, args.resolution, args.restarts)
    print(f"nu = {rep.nu:.6f}")
    print(f"min |det(Aa)| = {rep.min_abs_det:.6f}")
    print(f"argmin a = {np.array2string(rep.argmin_a, precision=6)}")
    print(f"argmin eta = {np.array2string(rep.argmin_eta, precision=6)}")
    if args.json:
        _dump_json({"config": vars_clean(args), "report": rep.to_dict()}, args.json)
    return EXIT_OK


def cmd_check(args):
    spec = ProblemSpec.load(args.problem)
    desc = spec.descriptor()
    sampler = _sampler(spec, args.samples, args.seed)
    ak = check_ak(desc, sampler)
    k = check_k(desc, sampler)
    pm = check_pm(desc, sampler)
    out = {"config": {"problem": spec.to_dict(), "sampler": {"n_x": sampler.n_x, "n_XY": sampler.n_XY,
                                                           "magnitudes": list(sampler.magnitudes), "seed": sampler.seed}},
           "AK": ak.to_dict(), "K": k.to_dict(), "PM": pm.to_dict()}
    status = EXIT_OK
    try:
        out["lipschitz"] = lipschitz_bound(desc, sampler).to_dict()
    except ConditionViolation as exc:
        out["lipschitz"] = {"error": str(exc)}
        print(f"Lipschitz bound: {exc}", file=sys.stderr)
        status = EXIT_FALSIFIED
    _dump_json(out, args.out)
    for name, rep in (("AK", ak), ("K", k), ("PM", pm)):
        print(f"{name}: {rep.verdict} (max ratio {rep.max_ratio:.6g}, {rep.n_samples} samples)", file=sys.stderr)
    if ak.verdict == "falsified" or pm.verdict == "falsified":
        status = EXIT_FALSIFIED
    if status != EXIT_OK:
        print("declared ellipticity constants are violated", file=sys.stderr)
    return status


def cmd_solve_linear(args):
    A = resolve_tensor(args.tensor)
    grid = _parse_grid(args.grid)
    if args.rhs == "gaussian-sum":
        f = gaussian_sum(grid, A.N)
    elif args.rhs == "manufactured":
        u_star = random_band_limited(grid, A.N, np.random.default_rng(args.seed))
        f = apply_operator(A, u_star)
    else:
        f = fio.read_efos(args.rhs)
        if f.grid != grid:
            raise ValueError(f"rhs grid {f.grid} differs from --grid {grid}")
    opts = LinearSolveOptions(regularization_m=args.regularize)
    u = solve_linear(A, f, opts)
    residual = norm(apply_operator(A, u) - f)
    summary = {
        "config": vars_clean(args),
        "norm_f": norm(f),
        "norm_u_L2": norm(u),
        "norm_u_LIONS": norm(u, NormKind.LIONS),
        "residual_L2": residual,
    }
    if args.out:
        fio.write_efos(args.out, u)
    _dump_json(summary, args.report)
    return EXIT_OK


def cmd_solve(args):
    spec = ProblemSpec.load(args.problem)
    desc = spec.descriptor()
    f, u_star = spec.right_hand_side(desc)
    provenance = {"command": "solve", "problem": spec.to_dict(), "tol": args.tol, "max_iter": args.max_iter}
    try:
        u, trace = picard_solve(desc, f, tol=args.tol, max_iter=args.max_iter)
    except NonConvergenceError as exc:
        if args.trace:
            with open(args.trace, "w") as fh:
                fh.write(exc.trace.to_csv(provenance))
        raise
    if args.trace:
        with open(args.trace, "w") as fh:
            fh.write(trace.to_csv(provenance))
    if args.out:
        fio.write_efos(args.out, u)
    summary = {
        "config": provenance,
        "iterations": trace.iterations,
        "bound": trace.bound,
        "max_contraction": trace.max_contraction(),
        "final_residual": trace.steps[-1].residual,
        "warnings": trace.warnings,
    }
    if u_star is not None:
        summary["relative_lions_error"] = norm(u - u_star, NormKind.LIONS) / norm(u_star, NormKind.LIONS)
        summary["comparison"] = verify_comparison(desc, u, u_star).to_dict() if norm(u - u_star) > 0 else None
    _dump_json(summary, args.report)
    return EXIT_OK


def cmd_reproduce(args):
    try:
        report = reproduce_example(args.example, {"seed": args.seed})
    except RegressionFailure as exc:
        _dump_json(exc.report, args.out)
        raise
    _dump_json(report, args.out)
    if args.example == "ex8":
        print(f"zeta = {report['zeta']:.6f}; identity residuals: "
              + ", ".join(f"{c['name']} = {c['value']:.3e}" for c in report["checks"][:2]), file=sys.stderr)
    return EXIT_OK


def _study_regularized(args):
    grid = _parse_grid(args.grid or "3,32,1.0")
    A = resolve_tensor(args.tensor or "dirac")
    u_star = random_band_limited(grid, A.N, np.random.default_rng(args.seed))
    f = apply_operator(A, u_star)
    u = solve_linear(A, f)
    rows = []
    for e in range(7):
        m = 10.0**e
        um = solve_linear(A, f, LinearSolveOptions(regularization_m=m))
        rows.append((m, norm(um - u) / norm(u)))
    return ["m", "relative_error"], rows


def _study_picard(args):
    grid = _parse_grid(args.grid or "3,16,1.0")
    A = resolve_tensor(args.tensor or "dirac")
    rows = []
    for b, c in ((0.1, 0.1), (0.2, 0.3), (0.3, 0.4), (0.45, 0.45)):
        desc = builtin_F("ex8", {"b": b, "c": c}, A, grid.lengths)
        u_star, f = manufactured({"seed": args.seed}, desc, grid)
        u, trace = picard_solve(desc, f, tol=1e-10, max_iter=500)
        err = norm(u - u_star, NormKind.LIONS) / norm(u_star, NormKind.LIONS)
        rows.append((b, c, desc.contraction_bound, trace.iterations, trace.max_contraction(), trace.steps[-1].residual, err))
    return ["b", "c", "bound", "iterations", "max_contraction", "final_residual", "relative_lions_error"], rows


def _study_comparison(args):
    A = resolve_tensor(args.tensor or "dirac")
    rows = []
    for M in (8, 16, 32):
        grid = GridSpec.cube(A.n, M, 1.0)
        desc = builtin_F("ex8", {"b": 0.2, "c": 0.3}, A, grid.lengths)
        _, f = manufactured({"seed": args.seed, "kmax": 3}, desc, grid)
        _, g = manufactured({"seed": args.seed + 1, "kmax": 3}, desc, grid)
        u, _ = picard_solve(desc, f, tol=1e-10, max_iter=500)
        v, _ = picard_solve(desc, g, tol=1e-10, max_iter=500)
        rep = verify_comparison(desc, u, v)
        rows.append((M, rep.gradient_gap, rep.map_gap, norm(f - g), rep.constant, rep.measured_C, rep.sobolev_ratio))
    return ["M", "gradient_gap", "map_gap", "rhs_gap", "constant", "measured_C", "sobolev_ratio"], rows


STUDIES = {
    "regularized-limit": _study_regularized,
    "picard-rate": _study_picard,
    "comparison-constant": _study_comparison,
}


def cmd_study(args):
    header, rows = STUDIES[args.kind](args)
    _write_table(args.out, header, rows, {"command": "study", **vars_clean(args)})
    return EXIT_OK


def cmd_list(args):
    print("tensors: " + ", ".join(BUILTIN_TENSORS))
    print("families: " + ", ".join(BUILTIN_FAMILIES))
    print("examples: ex9, ex8, pm-constants")
    print("studies: " + ", ".join(STUDIES))
    return EXIT_OK


# output locations and thread counts do not change results, so they stay out of provenance
_NOT_PROVENANCE = ("func", "threads", "out", "report", "trace", "json")


def vars_clean(args):
    return {k: v for k, v in sorted(vars(args).items()) if k not in _NOT_PROVENANCE}


# ---------------------------------------------------------------------------


def build_parser():
    p = argparse.ArgumentParser(prog="fnes", description=__doc__.splitlines()[0] if __doc__ else None)
    p.add_argument("--version", action="version", version=f"fnes {__version__}")
    p.add_argument("--threads", type=int, default=None, help="worker threads (default: $FNES_THREADS or all cores)")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("ellipticity", help="ellipticity constant and determinant minimum of a tensor")
    s.add_argument("--tensor", required=True)
    s.add_argument("--resolution", type=int, default=64)
    s.add_argument("--restarts", type=int, default=4)
    s.add_argument("--json")
    s.set_defaults(func=cmd_ellipticity)

    s = sub.add_parser("check", help="sampled AK, K, pseudo-monotonicity and Lipschitz checks")
    s.add_argument("--problem", required=True)
    s.add_argument("--samples", type=int)
    s.add_argument("--seed", type=int)
    s.add_argument("--out")
    s.set_defaults(func=cmd_check)

    s = sub.add_parser("solve-linear", help="spectral solve of A:Du = f")
    s.add_argument("--tensor", required=True)
    s.add_argument("--rhs", required=True, help="EFOS file, 'gaussian-sum' or 'manufactured'")
    s.add_argument("--grid", required=True, help="n,M,L")
    s.add_argument("--regularize", type=float)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out")
    s.add_argument("--report")
    s.set_defaults(func=cmd_solve_linear)

    s = sub.add_parser("solve", help="Picard solve of F(x, Du) = f")
    s.add_argument("--problem", required=True)
    s.add_argument("--tol", type=float, default=1e-10)
    s.add_argument("--max-iter", type=int, default=200)
    s.add_argument("--out")
    s.add_argument("--trace")
    s.add_argument("--report")
    s.set_defaults(func=cmd_solve)

    s = sub.add_parser("reproduce", help="recompute a worked example")
    s.add_argument("--example", required=True, choices=["ex9", "ex8", "pm-constants"])
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out")
    s.set_defaults(func=cmd_reproduce)

    s = sub.add_parser("study", help="convergence and constant studies (CSV output)")
    s.add_argument("--kind", required=True, choices=sorted(STUDIES))
    s.add_argument("--out", required=True)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--grid")
    s.add_argument("--tensor")
    s.set_defaults(func=cmd_study)

    s = sub.add_parser("list", help="list builtin tensors, families and examples")
    s.set_defaults(func=cmd_list)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    set_threads(args.threads if args.threads is not None else get_threads())
    try:
        return args.func(args)
    except (RegressionFailure, ConditionViolation, EstimateViolation, Falsified) as exc:
        print(f"falsified: {exc}", file=sys.stderr)
        return EXIT_FALSIFIED
    except (NonConvergenceError, SingularSymbolError, RealFieldError, EllipticityConsistencyError,
            EvaluatorError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (KeyError, ValueError, OSError, ZeroModeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    finally:
        set_threads(None)


if __name__ == "__main__":
    sys.exit(main())
