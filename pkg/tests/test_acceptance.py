"""Acceptance criteria 1-10, each at its stated tolerance.

Every test records a PASS/FAIL line that the terminal summary prints, then
asserts the same condition, so a failing criterion shows up both ways.
"""
import math
import time

import numpy as np
import pytest
from scipy.special import ndtr, ndtri

import oracles
from conftest import ACCEPTANCE
from mvcost.capacity import dispersion, solve_capacity_cost, verify_kkt
from mvcost.channel import Dmc, bsc, quantize_to_type
from mvcost.checks import run_lemma_checks
from mvcost.cli import render
from mvcost.kfunction import BETA_MULTIPLIERS, k_oracle_grid, k_value, l2_bound, socr
from mvcost.simulate import (build_feedback_scheme, build_nofeedback_scheme, paired_comparison,
                             run_exact_random_code, run_feedback_trials, run_nofeedback_trials)

N = 2000
TRIALS = 100_000
SEED = 2024
V = 0.05


def record(k, ok, detail):
    ACCEPTANCE[k] = (bool(ok), detail)
    print(f"criterion {k}: {'PASS' if ok else 'FAIL'}  {detail}")
    return ok


def scan_beta(r, sol, disp):
    """Every multiplier of the beta grid with its K - L2 gap; the largest gap wins."""
    sv = math.sqrt(disp.v_gamma)
    kres = k_value(r / sv, (sol.c_prime ** 2) * V / disp.v_gamma)
    scan = [l2_bound(r, m * sv, sol, disp, V, kres) for m in BETA_MULTIPLIERS]
    return max(scan, key=lambda s: s.gap)


@pytest.fixture(scope="module")
def best_beta(bsc_instance, r_star_01):
    _, sol, disp = bsc_instance
    t0 = time.perf_counter()
    best = scan_beta(r_star_01, sol, disp)
    return best, time.perf_counter() - t0


@pytest.fixture(scope="module")
def c6(bsc_instance, r_star_01):
    dmc, sol, disp = bsc_instance
    t0 = time.perf_counter()
    scheme = build_nofeedback_scheme(sol, disp, dmc, V, r_star_01, N, restrict=True)
    rep = run_nofeedback_trials(scheme, dmc, TRIALS, SEED)
    return scheme, rep, time.perf_counter() - t0


@pytest.fixture(scope="module")
def c7(bsc_instance, r_star_01, best_beta, c6):
    dmc, sol, disp = bsc_instance
    t0 = time.perf_counter()
    fb = build_feedback_scheme(sol, disp, dmc, V, r_star_01, N, best_beta[0].beta, seed=SEED,
                               restrict=True)
    rep = run_feedback_trials(fb, dmc, TRIALS, SEED)
    pair = paired_comparison(c6[0], fb, dmc, TRIALS, SEED)
    return fb, rep, pair, time.perf_counter() - t0


def exact_runs(dmc, sol, threads=1):
    t = quantize_to_type(sol.p_star, 12, sol.gamma, dmc.cost)
    return [run_exact_random_code(dmc, t, 12, 16, 10_000, seed, threads=threads)
            for seed in range(10)]


def test_criterion_1_capacity():
    t0 = time.perf_counter()
    dmc = bsc(0.3)
    sol = solve_capacity_cost(dmc, 0.2)
    disp = dispersion(sol, dmc)
    elapsed = time.perf_counter() - t0
    c, cp, v = oracles.bsc_capacity_cost(0.3, 0.2)
    errs = (abs(sol.capacity - c), abs(sol.c_prime - cp), abs(disp.v_gamma - v))
    ok = max(errs) <= 1e-3 and elapsed < 1.0
    record(1, ok, f"C={sol.capacity:.6f} C'={sol.c_prime:.6f} V={disp.v_gamma:.6f} "
                  f"max err {max(errs):.1e}, {elapsed:.2f}s")
    assert ok


def test_criterion_2_kkt():
    t0 = time.perf_counter()
    dmc = bsc(0.3)
    worst = verify_kkt(solve_capacity_cost(dmc, 0.2), dmc).max_residual
    g = np.random.default_rng(31337)
    for _ in range(20):
        W = g.dirichlet(np.ones(3), size=3)
        cost = np.array([0.0, *np.sort(g.uniform(0.1, 2.0, 2))])
        ch = Dmc((0, 1, 2), (0, 1, 2), W, cost)
        g0, gs = ch.gamma_0, ch.gamma_star
        for frac in (0.1, 0.3, 0.5, 0.7, 0.9):
            sol = solve_capacity_cost(ch, g0 + frac * (gs - g0))
            worst = max(worst, verify_kkt(sol, ch).max_residual)
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-6 and elapsed < 30
    record(2, ok, f"max KKT residual {worst:.1e} over 101 solves, {elapsed:.1f}s")
    assert ok


def test_criterion_3_kfunction():
    t0 = time.perf_counter()
    rs = (-1.0, -0.5, 0.0, 0.5, 1.0)
    vs = (0.1, 0.5, 1.0, 4.0)
    mono, gap, phi_err = math.inf, 0.0, 0.0
    for v in vs:
        for r in rs:
            val = k_value(r, v).value
            mono = min(mono, k_value(r + 0.05, v).value - val)
            gap = max(gap, abs(val - k_oracle_grid(r, v)))
    for r in rs:
        phi_err = max(phi_err, abs(k_value(r, 0.0).value - float(ndtr(r))))
    k04 = k_value(0.0, 4.0).value
    elapsed = time.perf_counter() - t0
    ok = mono > 0 and gap <= 1e-3 and phi_err <= 1e-6 and k04 < 0.5 - 1e-3 and elapsed < 120
    record(3, ok, f"min dK {mono:.2e}, oracle gap {gap:.1e}, K(r,0) err {phi_err:.0e}, "
                  f"K(0,4)={k04:.4f}, {elapsed:.0f}s")
    assert ok


def test_criterion_4_socr(bsc_instance):
    _, sol, disp = bsc_instance
    t0 = time.perf_counter()
    sv = math.sqrt(disp.v_gamma)
    parts, ok = [], True
    for eps in (0.01, 0.1, 0.5):
        res = socr(sol, disp, V, eps)
        base = sv * float(ndtri(eps))
        k_err = abs(res.k_at_r_star - eps)
        lift = res.r_star - base
        ok &= k_err <= 1e-4 and lift > 1e-4
        parts.append(f"eps={eps}: r*-baseline={lift:.2e}, |K-eps|={k_err:.0e}")
    elapsed = time.perf_counter() - t0
    ok &= elapsed < 60
    record(4, ok, "; ".join(parts) + f", {elapsed:.1f}s")
    assert ok


def test_criterion_5_feedback_gap(best_beta):
    best, elapsed = best_beta
    excess = best.gap - best.quad_error
    ok = excess >= 1e-4 and elapsed < 120
    record(5, ok, f"best K-L2 = {best.gap:.2e} at beta={best.beta:.4f} "
                  f"(quadrature error {best.quad_error:.1e}), {elapsed:.1f}s")
    assert ok


def test_criterion_6_nofeedback(c6):
    scheme, rep, elapsed = c6
    allowed = 0.1 + 3 * rep.std_err + 3 / math.sqrt(N)
    cost_ok = (rep.cost_mean <= rep.gamma + 3 * rep.cost_mean_se
               and rep.cost_var <= N * V + 3 * rep.cost_var_se)
    ok = rep.lemma1_bound <= allowed and cost_ok and elapsed < 300
    record(6, ok, f"lemma1_bound {rep.lemma1_bound:.4f} vs allowed {allowed:.4f} "
                  f"(threshold_prob {rep.threshold_prob:.4f}, e^(-n theta) "
                  f"{rep.lemma1_bound - rep.threshold_prob:.4f}); cost mean {rep.cost_mean:.5f}, "
                  f"var {rep.cost_var:.1f} <= {N * V:.0f}, {elapsed:.1f}s")
    assert ok


def test_criterion_7_feedback(c7, best_beta):
    fb, rep, pair, elapsed = c7
    gap = best_beta[0].gap
    if gap > 0.01:
        ok = pair["z"] >= 2
        rule = "z >= 2"
    else:
        ok = pair["difference"] >= -2 * pair["std_err"]
        rule = "non-inferiority (analytic gap < 0.01)"
    cost_ok = rep.checks["second_half_cost"] and rep.checks["cost_mean"]
    ok = ok and cost_ok and fb.variance_ok and elapsed < 600
    record(7, ok, f"{rule}: nofeedback {pair['nofeedback_prob']:.5f}, feedback "
                  f"{pair['feedback_prob']:.5f}, diff {pair['difference']:.1e} "
                  f"(se {pair['std_err']:.1e}), switch rate {rep.extra['switch_rate']:.3f}, "
                  f"{elapsed:.1f}s")
    assert ok


def test_criterion_8_exact_code(bsc_instance):
    dmc, sol, _ = bsc_instance
    t0 = time.perf_counter()
    reps = exact_runs(dmc, sol)
    elapsed = time.perf_counter() - t0
    worst = max(r.error_rate - r.lemma1_bound - 3 * r.std_err for r in reps)
    ok = all(r.holds for r in reps) and elapsed < 120
    record(8, ok, f"max (error - bound - 3 se) = {worst:.3f} over 10 seeds, "
                  f"error rates {min(r.error_rate for r in reps):.3f}-"
                  f"{max(r.error_rate for r in reps):.3f}, {elapsed:.1f}s")
    assert ok


def test_criterion_9_lemmas(bsc_instance):
    dmc, sol, disp = bsc_instance
    t0 = time.perf_counter()
    res = run_lemma_checks(sol, disp, dmc, seed=SEED, trials=100_000)
    elapsed = time.perf_counter() - t0
    l8 = res["lemma8"]
    ok = res["holds"] and elapsed < 300
    record(9, ok, f"lemma6 {res['lemma6']['holds']}, lemma7 {res['lemma7']['holds']}, "
                  f"lemma8 {l8['holds']} (bound {l8['bound']:.3f} vs empirical "
                  f"{l8['empirical']:.4f}), {elapsed:.1f}s")
    assert ok


def test_criterion_10_determinism(bsc_instance, c6, c7):
    dmc, sol, _ = bsc_instance
    scheme, rep6, _ = c6
    fb, rep7, pair, _ = c7
    same = []
    for threads in (2, 4):
        same.append(render(run_nofeedback_trials(scheme, dmc, TRIALS, SEED, threads).to_dict(),
                           "json") == render(rep6.to_dict(), "json"))
        same.append(render(run_feedback_trials(fb, dmc, TRIALS, SEED, threads).to_dict(),
                           "json") == render(rep7.to_dict(), "json"))
        same.append(render(paired_comparison(scheme, fb, dmc, TRIALS, SEED, threads), "json")
                    == render(pair, "json"))
    one = [render(r.to_dict(), "json") for r in exact_runs(dmc, sol, threads=1)]
    four = [render(r.to_dict(), "json") for r in exact_runs(dmc, sol, threads=4)]
    same.append(one == four)
    ok = all(same)
    record(10, ok, f"{sum(same)}/{len(same)} report pairs byte-identical across thread counts")
    assert ok
