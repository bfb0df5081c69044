"""Batch command line: cedensity <subcommand> [options]."""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
import tempfile

import numpy as np

from . import balls as ballmod
from .boxes import box_family
from .classify import (
    Config,
    density_sweep,
    estimate_expansion_constants,
    evaluate_row,
    row_to_dict,
    totaldepth_diagnostic,
)
from .errors import CEDensityError
from .family import load_family
from .orbit import critical_orbit
from .returns import EpsGeometry, essential_returns, free_returns, return_sequence


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


# ---------------------------------------------------------------- output

def fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return "%.17g" % float(v)
    return str(v)


def _json_default(o):
    if isinstance(o, np.integer):
        return int(o)
    if isinstance(o, np.floating):
        return float(o)
    if isinstance(o, np.bool_):
        return bool(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (set, tuple)):
        return list(o)
    raise TypeError(f"not serialisable: {type(o)}")


def dumps(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n"


def csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([fmt(v) for v in r])
    return buf.getvalue()


def write_atomic(path: str | None, text: str) -> None:
    """Write via a temp file in the target directory and rename; stdout when path is None or '-'."""
    if path is None or path == "-":
        sys.stdout.write(text)
        return
    d = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


# ---------------------------------------------------------------- argument types

def positive(s):
    v = float(s)
    if not v > 0:
        raise argparse.ArgumentTypeError(f"must be positive, got {s}")
    return v


def above_one(s):
    v = float(s)
    if not v > 1:
        raise argparse.ArgumentTypeError(f"must exceed 1, got {s}")
    return v


def unit_open(s):
    v = float(s)
    if not 0 < v < 1:
        raise argparse.ArgumentTypeError(f"must lie in (0,1), got {s}")
    return v


def natural(s):
    v = int(s)
    if v < 0:
        raise argparse.ArgumentTypeError(f"must be >= 0, got {s}")
    return v


def eps_list(s):
    try:
        vals = [float(x) for x in s.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad eps list {s!r}")
    if not vals or any(not v > 0 for v in vals):
        raise argparse.ArgumentTypeError(f"eps values must be positive: {s!r}")
    return vals


def t_range(s):
    try:
        lo, hi = (float(x) for x in s.split(":"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"range must be lo:hi, got {s!r}")
    if not lo < hi:
        raise argparse.ArgumentTypeError(f"need lo < hi in {s!r}")
    return lo, hi


# ---------------------------------------------------------------- subcommands

def _config(args) -> Config:
    return Config(n_min=args.n_min, n_max=args.n_max, lambda_ce=args.lambda_ce,
                  beta=args.beta, theta0=args.theta0, gamma=args.gamma, C0=args.C0)


def cmd_orbit(args):
    fam = load_family(args.family)
    t = fam.base_parameter if args.t is None else args.t
    orbit = critical_orbit(fam, t, args.crit, args.n)
    dt = fam.dt_function(t)
    xs = [orbit.critical_position] + orbit.points[:-1].tolist()
    rows, W, M = [], 0.0, 0.0
    for n in range(orbit.length + 1):
        s, lg = int(orbit.signs[n]), float(orbit.logs[n])
        inv = math.exp(-lg) if s != 0 and lg > -709 else math.inf
        W += inv
        num = dt(xs[n])
        M += 0.0 if num == 0.0 else (num * s * inv if s != 0 else math.nan)
        rows.append((n, float(orbit.points[n]), s, lg, float(orbit.crit_dist[n]), W, M))
    write_atomic(args.out, csv_text(["n", "x", "sign_D", "log_D", "crit_dist", "partial_W", "M_n"],
                                    rows))
    return 0


def cmd_returns(args):
    fam = load_family(args.family)
    t = fam.base_parameter if args.t is None else args.t
    orbit = critical_orbit(fam, t, args.crit, args.n_max)
    geom = EpsGeometry.for_family(fam, t, args.eps)
    recs = return_sequence(orbit, fam, geom, args.count)
    essential_returns(recs)
    free_returns(orbit, fam, geom, args.theta0, recs)
    rows = [(r.j, r.S, r.nearest, r.d, r.log_P, r.p, r.p_tilde, r.essential, r.free) for r in recs]
    header = ["j", "S_j", "nearest", "d_j", "log_P_j", "p_j", "p_tilde_j", "essential", "free"]
    write_atomic(args.out, csv_text(header, rows))
    return 0


def cmd_classify(args):
    fam = load_family(args.family)
    t = fam.base_parameter if args.t is None else args.t
    cfg = _config(args)
    row = row_to_dict(evaluate_row(fam, t, args.eps, args.C, args.tau, cfg))
    out = {"family": fam.to_spec(), "eps": args.eps, "C": args.C, "tau": args.tau, "row": row}
    if args.diagnostic:
        try:
            rep = totaldepth_diagnostic(fam, t, args.eps, args.C, cfg.C0, cfg.gamma, None,
                                        args.tau, cfg)
            d = vars(rep).copy()
            d["depth_checks"] = {str(k): v._asdict() for k, v in rep.depth_checks.items()}
            out["totaldepth"] = d
        except CEDensityError as e:
            out["totaldepth"] = {"error": type(e).__name__, "message": str(e)}
    write_atomic(args.out, dumps(out))
    return 0


ROW_HEADER = ["t", "x_pass_n", "y_pass_m", "ce_rate", "ce_verdict", "pr_best_C", "nv_nonzero",
              "undetermined_flag"]
SUMMARY_HEADER = ["eps", "lo", "hi", "one_sided", "fraction_pass", "fraction_undetermined",
                  "exit_counts", "lambda_hat", "lambda_bound", "lambda_ok"]


def cmd_sweep(args):
    fam = load_family(args.family)
    center = fam.base_parameter if args.center is None else args.center
    res = density_sweep(fam, center, args.eps, args.grid, args.C, args.tau, _config(args),
                        seed=args.seed, threads=args.threads, estimate_lambda=not args.no_lambda)
    rows, summary = [], []
    for w in res.windows:
        for r in w.rows:
            rows.append((r.t, r.x_pass_n, r.y_pass_m, r.ce_rate, r.ce_verdict, r.pr_best_C,
                         r.nv_nonzero, r.undetermined))
        exits = ";".join(f"{k}:{v}" for k, v in w.exit_counts.items())
        summary.append((w.eps, w.lo, w.hi, w.one_sided, w.fraction_pass, w.fraction_undetermined,
                        exits, w.lambda_hat, w.lambda_bound,
                        "" if w.lambda_ok is None else w.lambda_ok))
    write_atomic(args.out, csv_text(ROW_HEADER, rows))
    if args.summary is not None:
        write_atomic(args.summary, csv_text(SUMMARY_HEADER, summary))
    return 0


def _read_family(path):
    with open(path) as fh:
        return ballmod.BallFamily.from_json(fh.read())


def cmd_balls(args):
    if args.action == "random":
        fam = ballmod.random_special_family(args.seed, args.count, args.height, args.scale)
        write_atomic(args.out, fam.to_json() + "\n")
        return 0
    fam = _read_family(args.inp)
    if args.action == "verify":
        chk = ballmod.lemma_bound_check(fam, args.N, args.kappa)
        out = {"measure": chk.measure, "bound": chk.bound, "pass": chk.passed,
               "K": chk.K, "height": chk.height}
        write_atomic(args.out, dumps(out))
        return 0
    iv = ballmod.deep_set(fam, args.N)
    write_atomic(args.out, csv_text(["left", "right"], list(iv)))
    return 0


def cmd_boxes(args):
    fam = load_family(args.family)
    lo, hi = args.range
    res = box_family(fam, lo, hi, args.crit, args.m_max, args.n_cap, args.eps, args.lam,
                     args.theta, grid=args.grid)
    out = [b.to_dict() for b in res.boxes]
    write_atomic(args.out, dumps(out))
    if args.report is not None:
        write_atomic(args.report, dumps({"special": res.special, "violation": res.violation,
                                         "height": res.height, "height_ok": res.height_ok,
                                         "skipped": res.skipped}))
    return 0


def cmd_constants(args):
    fam = load_family(args.family)
    cfg = _config(args)
    est = estimate_expansion_constants(fam, args.eps, args.samples, args.seed, cfg)
    write_atomic(args.out, dumps(vars(est)))
    return 0


# ---------------------------------------------------------------- parser

def _common(p, family=True):
    if family:
        p.add_argument("--family", default="logistic", help="'logistic' or a family JSON file")
    p.add_argument("--out", default=None, help="output path (stdout if omitted)")
    p.add_argument("--seed", type=natural, default=None)
    p.add_argument("--threads", type=int, default=1)


def _verdict_opts(p, eps=True):
    if eps:
        p.add_argument("--eps", type=positive, default=1e-3)
    p.add_argument("--C", type=positive, default=20.0)
    p.add_argument("--tau", type=above_one, default=2.0)
    p.add_argument("--C0", type=positive, default=5.0)
    p.add_argument("--gamma", type=unit_open, default=0.5)
    p.add_argument("--theta0", type=positive, default=0.1)
    p.add_argument("--lambda-ce", dest="lambda_ce", type=positive, default=0.05)
    p.add_argument("--beta", type=above_one, default=2.0)
    p.add_argument("--n-min", dest="n_min", type=int, default=50)
    p.add_argument("--n-max", dest="n_max", type=int, default=10_000)


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="cedensity", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("orbit", help="critical orbit table")
    _common(p)
    p.add_argument("--t", type=float, default=None)
    p.add_argument("--crit", type=natural, default=0)
    p.add_argument("--n", type=natural, default=100)
    p.set_defaults(func=cmd_orbit)

    p = sub.add_parser("returns", help="return records")
    _common(p)
    p.add_argument("--t", type=float, default=None)
    p.add_argument("--crit", type=natural, default=0)
    p.add_argument("--eps", type=positive, default=1e-3)
    p.add_argument("--count", type=natural, default=20)
    p.add_argument("--n-max", dest="n_max", type=natural, default=10_000)
    p.add_argument("--theta0", type=positive, default=0.1)
    p.set_defaults(func=cmd_returns)

    p = sub.add_parser("classify", help="verdicts for one parameter")
    _common(p)
    _verdict_opts(p)
    p.add_argument("--t", type=float, default=None)
    p.add_argument("--diagnostic", action="store_true", help="add the total-depth report")
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("sweep", help="density sweep around a parameter")
    _common(p)
    _verdict_opts(p, eps=False)
    p.add_argument("--eps", type=eps_list, default=[1e-2, 1e-3])
    p.add_argument("--center", type=float, default=None)
    p.add_argument("--grid", type=int, default=200)
    p.add_argument("--summary", default=None)
    p.add_argument("--no-lambda", action="store_true", help="skip the expansion-constant estimate")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("balls", help="special families of balls")
    bsub = p.add_subparsers(dest="action", required=True, parser_class=_Parser)
    q = bsub.add_parser("verify")
    _common(q, family=False)
    q.add_argument("--in", dest="inp", required=True)
    q.add_argument("--N", type=natural, required=True)
    q.add_argument("--kappa", type=unit_open, default=0.5)
    q = bsub.add_parser("random")
    _common(q, family=False)
    q.set_defaults(seed=0)
    q.add_argument("--count", type=int, default=10)
    q.add_argument("--height", type=int, default=4)
    q.add_argument("--scale", type=positive, default=1.0)
    q = bsub.add_parser("deepset")
    _common(q, family=False)
    q.add_argument("--in", dest="inp", required=True)
    q.add_argument("--N", type=natural, required=True)
    p.set_defaults(func=cmd_balls)

    p = sub.add_parser("boxes", help="pre-critical parameter boxes")
    bsub = p.add_subparsers(dest="action", required=True, parser_class=_Parser)
    q = bsub.add_parser("find")
    _common(q)
    q.add_argument("--range", type=t_range, required=True)
    q.add_argument("--crit", type=natural, default=0)
    q.add_argument("--m-max", dest="m_max", type=natural, default=3)
    q.add_argument("--n-cap", dest="n_cap", type=natural, default=10)
    q.add_argument("--eps", type=positive, default=1e-2)
    q.add_argument("--lambda", dest="lam", type=above_one, default=2.0)
    q.add_argument("--theta", type=positive, default=0.01)
    q.add_argument("--grid", type=int, default=1000)
    q.add_argument("--report", default=None, help="write the specialness report here")
    p.set_defaults(func=cmd_boxes)

    p = sub.add_parser("constants", help="sampled expansion constants")
    _common(p)
    _verdict_opts(p)
    p.set_defaults(seed=0)
    p.add_argument("--samples", type=int, default=32)
    p.set_defaults(func=cmd_constants)
    return ap


def run(argv=None) -> int:
    """Parse and dispatch; 0 ok, 1 usage error, 2 runtime error."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if getattr(args, "threads", 1) < 1:
            raise UsageError("--threads must be >= 1")
        if hasattr(args, "grid") and args.grid < 2:
            raise UsageError("--grid must be >= 2")
    except UsageError as e:
        print(f"usage error: {e}", file=sys.stderr)
        return 1
    try:
        return args.func(args)
    except (CEDensityError, ValueError, OSError, OverflowError, IndexError) as e:
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
