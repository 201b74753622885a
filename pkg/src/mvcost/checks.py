"""Verification batteries for the finite-n lemmas.

Each battery returns a plain dict of per-case results plus an overall
"holds" flag, so the CLI can print it and the tests can assert on it.
"""
from __future__ import annotations

import math

import numpy as np

from . import rng as streams
from .capacity import check_q_ratio_bound, quantized_quantities
from .kfunction import ThreePointDist, essential_sup_limit_check
from .simulate import hoeffding_ratio_bound, ratio_exceedance

LEMMA6_NS = (8, 12, 16)
LEMMA7_XS = (10.0, 20.0, 30.0)
LEMMA7_CASES = 5
LEMMA8_PAIR = ((0.62, 0.38), (0.6, 0.4))


def lemma6_battery(solution, disp, dmc, ns=LEMMA6_NS):
    """Constant-composition capacity and dispersion gaps (parts 1, 2) and
    the output-law ratio bound over all output types (part 3)."""
    cases = []
    for n in ns:
        qq = quantized_quantities(solution, disp, dmc, n)
        cases.append({"n": n, "type": list(qq.type_n.counts), "c_n": qq.c_n,
                      "c_lower_bound": qq.c_lower_bound, "part1": qq.part1_holds,
                      "v_n": qq.v_n, "v_gap": abs(qq.v_n - disp.v_gamma),
                      "v_gap_bound": qq.v_gap_bound, "part2": qq.part2_holds})
    ratio = check_q_ratio_bound(solution, dmc, ns)
    for case, m, t in zip(cases, ratio.min_log_ratio, ratio.thresholds):
        case["min_log_ratio"] = m
        case["ratio_threshold"] = t
    holds = all(c["part1"] and c["part2"] for c in cases) and ratio.holds
    return {"cases": cases, "kappa_hat": ratio.kappa_hat, "kappa_cap": ratio.kappa_cap,
            "part3": ratio.holds, "holds": bool(holds)}


def random_three_point(g):
    locs = np.sort(g.uniform(-3.0, 3.0, 3))
    return ThreePointDist(tuple(g.dirichlet(np.ones(3))), tuple(locs))


def lemma7_battery(cases=LEMMA7_CASES, xs=LEMMA7_XS, seed=0):
    """(1/x) log E Phi(Pi - x) + x/2 should approach max pi as x grows."""
    g = streams.stream(seed, streams.CHECKS, 7)
    out = []
    for _ in range(cases):
        dist = random_three_point(g)
        vals = essential_sup_limit_check(dist, xs)
        dev = np.abs(vals - max(dist.locs))
        out.append({"dist": dist.to_dict(), "values": vals.tolist(), "deviation": dev.tolist(),
                    "holds": bool(dev[-1] < dev[0])})
    return {"xs": list(xs), "cases": out, "holds": all(c["holds"] for c in out)}


def lemma8_battery(n=200, trials=100_000, seed=0, pair=LEMMA8_PAIR, threads=1):
    """Log-ratio tail bound against its Monte Carlo frequency, at
    c_n = sqrt(n / log n) and gamma = min q' / 2."""
    qp, q = pair
    c_n = math.sqrt(n / math.log(n))
    gamma = 0.5 * min(qp)
    bound = hoeffding_ratio_bound(qp, q, n, c_n, gamma)
    freq = ratio_exceedance(qp, q, n, c_n, trials, seed, threads)
    se = math.sqrt(max(freq * (1 - freq), 1.0 / trials) / trials)
    return {"n": n, "trials": trials, "c_n": c_n, "gamma": gamma, "bound": bound,
            "empirical": freq, "std_err": se, "holds": bool(freq <= bound + 3 * se)}


def run_lemma_checks(solution, disp, dmc, seed=0, trials=100_000, threads=1):
    out = {"lemma6": lemma6_battery(solution, disp, dmc),
           "lemma7": lemma7_battery(seed=seed),
           "lemma8": lemma8_battery(trials=trials, seed=seed, threads=threads)}
    out["holds"] = all(v["holds"] for v in out.values())
    return out
