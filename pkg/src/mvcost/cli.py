"""Command-line entry point.

Exit status: 0 on success, 1 on bad input (including unknown subcommands),
2 when a report's own invariant checks fail. Options may also come from a
JSON file given with --config; flags override the file, which overrides the
built-in defaults.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys

import numpy as np

from .bounds import curve_violations, emit_curve
from .capacity import dispersion, solve_capacity_cost
from .channel import load_channel, quantize_to_type
from .checks import run_lemma_checks
from .errors import InputError, MvcostError
from .kfunction import find_beta, k_oracle_grid, k_value, l2_bound, socr
from .simulate import (build_feedback_scheme, build_nofeedback_scheme, default_theta,
                       run_exact_random_code, run_feedback_trials, run_nofeedback_trials)

DIGITS = 12

DEFAULTS = {
    "format": "json", "out": None, "threads": 1, "seed": 0, "tol": 1e-10,
    "theta_exp": 0.75, "trials": 100_000, "density": "auto", "restrict_atoms": False,
    "calibration_trials": 20_000, "messages": 16, "n": None, "r": None, "eps": None,
    "beta": None, "scan": False, "auto_beta": False, "oracle": False, "grid": None,
    "no_feedback": False, "csv_append": None, "lemma_trials": 100_000,
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise InputError(message)


# ---------------------------------------------------------------- output


def _clean(x):
    if isinstance(x, dict):
        return {str(k): _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    if isinstance(x, np.ndarray):
        return [_clean(v) for v in x.tolist()]
    if isinstance(x, (bool, np.bool_)):
        return bool(x)
    if isinstance(x, (int, np.integer)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        if not math.isfinite(x):
            return None
        return float(f"{x:.{DIGITS}g}")
    return x


def _flatten(d, prefix=""):
    row = {}
    for k, v in d.items():
        key = f"{prefix}{k}"
        if isinstance(v, dict):
            row.update(_flatten(v, key + "."))
        elif isinstance(v, list):
            row[key] = json.dumps(v)
        else:
            row[key] = v
    return row


def render(payload, fmt):
    data = _clean(payload)
    if fmt == "json":
        return json.dumps(data, indent=2) + "\n"
    rows = data if isinstance(data, list) else [data]
    rows = [_flatten(r) for r in rows]
    fields = list(rows[0]) if rows else []
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=fields, lineterminator="\n", extrasaction="ignore")
    w.writeheader()
    for r in rows:
        w.writerow(r)
    return buf.getvalue()


# ---------------------------------------------------------------- commands


def _require(args, *names):
    for name in names:
        if getattr(args, name, None) is None:
            raise InputError(f"--{name.replace('_', '-')} is required")


def _setup(args):
    _require(args, "channel", "gamma")
    dmc = load_channel(args.channel)
    sol = solve_capacity_cost(dmc, args.gamma, args.tol)
    return dmc, sol, dispersion(sol, dmc)


def _capacity_record(dmc, sol, disp):
    rec = sol.to_dict()
    rec.update({"v_gamma": disp.v_gamma, "nu": disp.nu.tolist(), "i_max": disp.i_max,
                "gamma_0": dmc.gamma_0, "gamma_star": dmc.gamma_star})
    return rec


def _parse_grid(text):
    try:
        g0, g1, step = (float(x) for x in text.split(":"))
    except ValueError:
        raise InputError("--grid expects G0:G1:STEP") from None
    if not step > 0 or g1 < g0:
        raise InputError("--grid needs G0 <= G1 and a positive step")
    count = int(math.floor((g1 - g0) / step + 1e-9)) + 1
    return [g0 + i * step for i in range(count)]


def cmd_capacity(args):
    _require(args, "channel")
    dmc = load_channel(args.channel)
    gammas = _parse_grid(args.grid) if args.grid else None
    if gammas is None:
        _require(args, "gamma")
        sol = solve_capacity_cost(dmc, args.gamma, args.tol)
        return _capacity_record(dmc, sol, dispersion(sol, dmc)), True
    rows = []
    for g in gammas:
        sol = solve_capacity_cost(dmc, g, args.tol)
        rec = _capacity_record(dmc, sol, dispersion(sol, dmc))
        rows.append(rec)
    return rows, True


def cmd_kfunc(args):
    _require(args, "r", "v")
    res = k_value(args.r, args.v)
    if args.oracle:
        oracle = k_oracle_grid(args.r, args.v)
        res = type(res)(res.r, res.v, res.value, res.minimizer, oracle - res.value,
                        res.alternatives)
    return res.to_dict(), True


def _rate(args, sol, disp):
    if args.r is not None:
        return args.r
    _require(args, "eps")
    return socr(sol, disp, args.v, args.eps).r_star


def cmd_socr(args):
    _require(args, "v", "eps")
    _, sol, disp = _setup(args)
    return socr(sol, disp, args.v, args.eps).to_dict(), True


def cmd_feedback_bound(args):
    _require(args, "v")
    _, sol, disp = _setup(args)
    r = _rate(args, sol, disp)
    if args.beta is not None and not args.scan:
        res = l2_bound(r, args.beta, sol, disp, args.v)
        return {"r": r, "beta": res.beta, "l2": res.value, "k": res.k, "gap": res.gap,
                "quad_error": res.quad_error, "minimizer": res.minimizer.to_dict()}, True
    res = find_beta(r, sol, disp, args.v)
    out = res.to_dict()
    out["r"] = r
    return out, True


def _theta(args, n):
    return default_theta(n, args.theta_exp)


def _append_csv(path, record):
    row = _flatten(_clean(record))
    try:
        with open(path) as fh:
            header = fh.readline().strip().split(",")
    except FileNotFoundError:
        header = None
    with open(path, "a", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=header or list(row), lineterminator="\n",
                           extrasaction="ignore")
        if header is None:
            w.writeheader()
        w.writerow(row)


def cmd_simulate(args):
    kind = args.kind
    if kind == "exact":
        return _simulate_exact(args)
    _require(args, "v", "n")
    dmc, sol, disp = _setup(args)
    r = _rate(args, sol, disp)
    theta = _theta(args, args.n)
    if kind == "nofeedback":
        scheme = build_nofeedback_scheme(sol, disp, dmc, args.v, r, args.n, theta,
                                         restrict=args.restrict_atoms)
        rep = run_nofeedback_trials(scheme, dmc, args.trials, args.seed, args.threads,
                                    args.density)
    else:
        if disp.v_gamma <= 0:
            raise InputError("feedback needs a positive dispersion V(Γ)")
        if args.beta is None and not args.auto_beta:
            raise InputError("give --beta B or --auto-beta")
        beta = args.beta if args.beta is not None else find_beta(r, sol, disp, args.v).beta
        fb = build_feedback_scheme(sol, disp, dmc, args.v, r, args.n, beta,
                                   args.calibration_trials, args.seed, theta,
                                   restrict=args.restrict_atoms)
        rep = run_feedback_trials(fb, dmc, args.trials, args.seed, args.threads, args.density)
        rep.checks["scheme_variance"] = fb.variance_ok
    if args.csv_append:
        _append_csv(args.csv_append, rep.to_dict())
    return rep.to_dict(), rep.ok


def _simulate_exact(args):
    _require(args, "channel", "gamma", "n")
    dmc = load_channel(args.channel)
    sol = solve_capacity_cost(dmc, args.gamma, args.tol)
    t = quantize_to_type(sol.p_star, args.n, args.gamma, dmc.cost)
    rep = run_exact_random_code(dmc, t, args.n, args.messages, args.trials, args.seed,
                                _theta(args, args.n), threads=args.threads)
    out = rep.to_dict()
    if args.csv_append:
        _append_csv(args.csv_append, out)
    return out, rep.holds


def cmd_bounds(args):
    _require(args, "v", "r_min", "r_max", "step")
    _, sol, disp = _setup(args)
    pts = emit_curve(sol, disp, args.v, args.r_min, args.r_max, args.step,
                     feedback=not args.no_feedback)
    rows = [p.to_dict() for p in pts]
    if args.format == "csv":
        rows = [{k: p[k] for k in ("r", "floor_gv", "baseline_as", "feedback_l2")} for p in rows]
    return rows, not curve_violations(pts)


def cmd_check(args):
    dmc, sol, disp = _setup(args)
    res = run_lemma_checks(sol, disp, dmc, args.seed, args.lemma_trials, args.threads)
    return res, res["holds"]


# ---------------------------------------------------------------- parser


def _common(p, channel=True):
    p.add_argument("--config", help="JSON file with option values")
    p.add_argument("--out", help="write the report here instead of stdout")
    p.add_argument("--format", choices=("json", "csv"))
    p.add_argument("--threads", type=int)
    p.add_argument("--tol", type=float)
    if channel:
        p.add_argument("--channel", help="channel JSON file")
        p.add_argument("--gamma", type=float)


def build_parser():
    parser = _Parser(prog="mvcost", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("capacity", help="capacity-cost solution and dispersion")
    _common(p)
    p.add_argument("--grid", help="G0:G1:STEP, one row per cost level")
    p.set_defaults(func=cmd_capacity)

    p = sub.add_parser("kfunc", help="K(r, V) and a minimizer")
    _common(p, channel=False)
    p.add_argument("--r", type=float)
    p.add_argument("--v", type=float)
    p.add_argument("--oracle", action="store_true", default=None)
    p.set_defaults(func=cmd_kfunc)

    p = sub.add_parser("socr", help="optimal second-order rate r*")
    _common(p)
    p.add_argument("--v", type=float)
    p.add_argument("--eps", type=float)
    p.set_defaults(func=cmd_socr)

    p = sub.add_parser("feedback-bound", help="feedback bound L2(r, beta)")
    _common(p)
    p.add_argument("--v", type=float)
    p.add_argument("--r", type=float)
    p.add_argument("--eps", type=float, help="use r = r*(eps) when --r is absent")
    g = p.add_mutually_exclusive_group()
    g.add_argument("--beta", type=float)
    g.add_argument("--scan", action="store_true", default=None)
    p.set_defaults(func=cmd_feedback_bound)

    p = sub.add_parser("simulate", help="Monte Carlo runs of the coding schemes")
    p.add_argument("kind", choices=("nofeedback", "feedback", "exact"))
    _common(p)
    p.add_argument("--v", type=float)
    p.add_argument("--eps", type=float)
    p.add_argument("--r", type=float, help="rate; defaults to r*(eps)")
    p.add_argument("--n", type=int)
    p.add_argument("--trials", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--theta-exp", type=float)
    p.add_argument("--density", choices=("auto", "exact", "surrogate"))
    p.add_argument("--restrict-atoms", action="store_true", default=None,
                   help="keep cost levels admissible at this n instead of failing")
    p.add_argument("--beta", type=float)
    p.add_argument("--auto-beta", action="store_true", default=None)
    p.add_argument("--calibration-trials", type=int)
    p.add_argument("--messages", type=int)
    p.add_argument("--csv-append", help="also append a CSV row to this file")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("bounds", help="error-probability curves")
    p.add_argument("what", choices=("curve",))
    _common(p)
    p.add_argument("--v", type=float)
    p.add_argument("--r-min", type=float)
    p.add_argument("--r-max", type=float)
    p.add_argument("--step", type=float)
    p.add_argument("--no-feedback", action="store_true", default=None)
    p.set_defaults(func=cmd_bounds)

    p = sub.add_parser("check", help="lemma verification batteries")
    p.add_argument("what", choices=("lemmas",))
    _common(p)
    p.add_argument("--seed", type=int)
    p.add_argument("--lemma-trials", type=int)
    p.set_defaults(func=cmd_check)
    return parser


def _load_config(path):
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise InputError(f"cannot read config {path}: {exc}") from None
    if not isinstance(cfg, dict):
        raise InputError("config must be a JSON object")
    return {k.replace("-", "_"): v for k, v in cfg.items()}


def resolve(argv):
    """Parse argv and merge config file values and defaults underneath."""
    args = build_parser().parse_args(argv)
    if args.command is None:
        raise InputError("a subcommand is required")
    cfg = _load_config(args.config) if getattr(args, "config", None) else {}
    for key in {**DEFAULTS, **cfg}:
        if getattr(args, key, None) is None:
            setattr(args, key, cfg.get(key, DEFAULTS.get(key)))
    return args


def dispatch(args):
    payload, ok = args.func(args)
    text = render(payload, args.format)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return 0 if ok else 2


def main(argv=None):
    try:
        args = resolve(sys.argv[1:] if argv is None else argv)
        return dispatch(args)
    except (MvcostError, OSError) as exc:
        sys.stderr.write(f"mvcost: {exc}\n")
        return 1


if __name__ == "__main__":
    sys.exit(main())
