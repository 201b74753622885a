import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from mvcost.capacity import (binary_joint_terms, capacity_derivative, cc_log_prob_by_output_count,
                             cc_output_prob, check_q_ratio_bound, dispersion, min_log_ratio,
                             quantized_quantities, saturation_cost, solve_capacity_cost,
                             verify_kkt, CapacityCostSolution)
from mvcost.channel import Dmc, NType, bsc, quantize_to_type
from mvcost.errors import InfeasibleError, InputError

# BSC(0.3), Γ = 0.2, from the closed forms in oracles.py
BSC_C = 0.053199824509214566
BSC_CP = 0.19581929012748234
BSC_V = 0.09656205982221898


def test_frozen_values_match_oracle():
    c, cp, v = oracles.bsc_capacity_cost(0.3, 0.2)
    assert (c, cp, v) == pytest.approx((BSC_C, BSC_CP, BSC_V), abs=1e-15)


def test_bsc_solution(bsc_instance):
    dmc, sol, disp = bsc_instance
    assert sol.capacity == pytest.approx(BSC_C, abs=1e-9)
    assert sol.c_prime == pytest.approx(BSC_CP, abs=1e-6)
    assert disp.v_gamma == pytest.approx(BSC_V, abs=1e-8)
    assert sol.p_star == pytest.approx([0.8, 0.2], abs=1e-9)
    assert sol.uniqueness_flag is True and not sol.saturated
    assert sol.kkt_residual < 1e-8


@pytest.mark.parametrize("p, gamma", [(0.1, 0.05), (0.2, 0.3), (0.3, 0.45), (0.45, 0.1)])
def test_bsc_grid(p, gamma):
    c, cp, v = oracles.bsc_capacity_cost(p, gamma)
    dmc = bsc(p)
    sol = solve_capacity_cost(dmc, gamma)
    assert sol.capacity == pytest.approx(c, abs=1e-9)
    assert sol.c_prime == pytest.approx(cp, abs=1e-6)
    assert dispersion(sol, dmc).v_gamma == pytest.approx(v, abs=1e-8)


def test_noiseless_ternary():
    costs = [0.0, 1.0, 2.0]
    dmc = Dmc((0, 1, 2), (0, 1, 2), np.eye(3), np.array(costs))
    for gamma in (0.3, 0.7):
        c, s = oracles.noiseless_capacity_cost(costs, gamma)
        sol = solve_capacity_cost(dmc, gamma)
        assert sol.capacity == pytest.approx(c, abs=1e-9)
        assert sol.c_prime == pytest.approx(s, abs=1e-6)
    # the information density is a function of x alone, so its conditional variance vanishes
    assert dispersion(solve_capacity_cost(dmc, 0.3), dmc).v_gamma == pytest.approx(0.0, abs=1e-12)


def test_saturation():
    dmc = bsc(0.3)
    assert saturation_cost(dmc) == pytest.approx(0.5, abs=1e-8)
    sol = solve_capacity_cost(dmc, 0.7)
    assert sol.saturated and sol.c_prime == 0.0
    assert sol.capacity == pytest.approx(math.log(2) - oracles.h(0.3), abs=1e-10)


def test_saturation_lp_picks_cheapest():
    # inputs 1 and 2 have the same row, so the optimal set is a segment; the cheap end wins
    W = np.array([[1.0, 0.0], [0.0, 1.0], [0.0, 1.0]])
    dmc = Dmc((0, 1, 2), (0, 1), W, np.array([0.0, 3.0, 1.0]))
    assert saturation_cost(dmc) == pytest.approx(0.5, abs=1e-6)
    sol = solve_capacity_cost(dmc, 2.0)
    assert sol.p_star @ dmc.cost <= 2.0 + 1e-9


def test_infeasible_gamma():
    with pytest.raises(InfeasibleError):
        solve_capacity_cost(bsc(0.3), 0.0)


def test_bad_tol():
    with pytest.raises(InputError):
        solve_capacity_cost(bsc(0.3), 0.2, tol=0)


def test_derivative_agrees_with_difference():
    assert capacity_derivative(bsc(0.3), 0.2) == pytest.approx(BSC_CP, abs=1e-6)
    with pytest.raises(InputError):
        capacity_derivative(bsc(0.3), 0.5)


def test_solution_roundtrip(bsc_instance):
    sol = bsc_instance[1]
    back = CapacityCostSolution.from_dict(sol.to_dict())
    assert back.to_dict() == sol.to_dict()


def random_channel(seed, J, K):
    g = np.random.default_rng(seed)
    W = g.dirichlet(np.ones(K), size=J)
    cost = np.sort(g.uniform(0, 2, J))
    cost[0] = 0.0
    return Dmc(tuple(range(J)), tuple(range(K)), W, cost)


@pytest.mark.parametrize("seed", range(12))
def test_kkt_battery(seed):
    g = np.random.default_rng(1000 + seed)
    dmc = random_channel(seed, int(g.integers(2, 5)), int(g.integers(2, 5)))
    gs = dmc.gamma_star
    gamma = dmc.gamma_0 + g.uniform(0.2, 0.8) * (gs - dmc.gamma_0)
    sol = solve_capacity_cost(dmc, gamma)
    rep = verify_kkt(sol, dmc)
    assert rep.max_residual < 1e-8
    assert sol.p_star @ dmc.cost == pytest.approx(gamma, abs=1e-9)
    # no feasible perturbation does better
    for _ in range(20):
        P = g.dirichlet(np.ones(dmc.J))
        if P @ dmc.cost <= gamma:
            from mvcost.channel import mutual_information
            assert mutual_information(P, dmc) <= sol.capacity + 1e-10


@settings(max_examples=25, deadline=None)
@given(st.integers(1, 4), st.integers(0, 4), st.integers(0, 2 ** 16))
def test_cc_output_prob_brute(k0, k1, seed):
    n = k0 + k1
    g = np.random.default_rng(seed)
    W = g.dirichlet(np.ones(3), size=2)
    dmc = Dmc((0, 1), (0, 1, 2), W, np.array([0.0, 1.0]))
    y = g.integers(0, 3, n)
    got = float(cc_output_prob(NType(n, (k0, k1)), dmc, y))
    assert got == pytest.approx(oracles.cc_output_prob_brute((k0, k1), W.tolist(), y.tolist()),
                                rel=1e-10, abs=1e-300)


def test_cc_output_prob_ternary_batch():
    W = np.array([[0.6, 0.3, 0.1], [0.2, 0.5, 0.3], [0.1, 0.2, 0.7]])
    dmc = Dmc((0, 1, 2), (0, 1, 2), W, np.array([0.0, 1.0, 2.0]))
    t = NType(5, (2, 2, 1))
    Y = np.array([[0, 1, 2, 2, 0], [2, 2, 2, 2, 2], [1, 0, 1, 0, 1]])
    got = cc_output_prob(t, dmc, Y)
    want = [oracles.cc_output_prob_brute(t.counts, W.tolist(), y.tolist()) for y in Y]
    assert got == pytest.approx(want, rel=1e-10)


def test_binary_joint_terms_sum_to_cc():
    dmc = bsc(0.3)
    counts = (4, 2)
    by_m = cc_log_prob_by_output_count(counts, dmc)
    for m in range(7):
        y = [1] * m + [0] * (6 - m)
        want = oracles.cc_output_prob_brute(counts, dmc.transition.tolist(), y)
        assert math.exp(by_m[m]) == pytest.approx(want, rel=1e-12)
    logw, (N00, N01, N10, N11), valid = binary_joint_terms(counts, dmc)
    assert np.all((N00 + N01)[valid] == 4) and np.all((N10 + N11)[valid] == 2)
    # probabilities over all output sequences sum to one
    total = sum(math.comb(6, m) * math.exp(by_m[m]) for m in range(7))
    assert total == pytest.approx(1.0, abs=1e-12)


def test_quantized_quantities(bsc_instance):
    dmc, sol, disp = bsc_instance
    for n in (8, 12, 16, 100):
        qq = quantized_quantities(sol, disp, dmc, n)
        assert qq.support_match and qq.part1_holds and qq.part2_holds
    qq = quantized_quantities(sol, disp, dmc, 10)
    assert qq.type_n.counts == (8, 2)
    assert qq.c_n == pytest.approx(BSC_C, abs=1e-12)


def test_min_log_ratio_brute(bsc_instance):
    dmc, sol, _ = bsc_instance
    t = quantize_to_type(sol.p_star, 8, 0.2, dmc.cost)
    import itertools
    best = math.inf
    for y in itertools.product((0, 1), repeat=8):
        q = math.prod(sol.q_star[b] for b in y)
        cc = oracles.cc_output_prob_brute(t.counts, dmc.transition.tolist(), y)
        best = min(best, math.log(q / cc))
    assert min_log_ratio(t, dmc, sol.q_star) == pytest.approx(best, abs=1e-10)


def test_q_ratio_bound_bsc(bsc_instance):
    dmc, sol, _ = bsc_instance
    rep = check_q_ratio_bound(sol, dmc)
    assert rep.holds and rep.kappa_hat == 0.0


def test_cc_output_prob_sums_to_one():
    W = np.array([[0.6, 0.3, 0.1], [0.2, 0.5, 0.3], [0.1, 0.2, 0.7]])
    dmc = Dmc((0, 1, 2), (0, 1, 2), W, np.array([0.0, 1.0, 2.0]))
    import itertools
    Y = np.array(list(itertools.product(range(3), repeat=7)))
    for counts in ((7, 0, 0), (3, 2, 2), (1, 5, 1)):
        assert cc_output_prob(NType(7, counts), dmc, Y).sum() == pytest.approx(1.0, abs=1e-12)
    Yb = np.array(list(itertools.product(range(2), repeat=8)))
    assert cc_output_prob(NType(8, (5, 3)), bsc(0.2), Yb).sum() == pytest.approx(1.0, abs=1e-12)


def test_capacity_concave_nondecreasing():
    dmc = random_channel(3, 3, 3)
    g0, gs = dmc.gamma_0, dmc.gamma_star
    gammas = g0 + (gs - g0) * np.linspace(0.05, 0.95, 12)
    caps = [solve_capacity_cost(dmc, g, probe=False).capacity for g in gammas]
    assert np.all(np.diff(caps) >= -1e-12)
    for i in range(1, len(gammas) - 1):
        a, b, c = gammas[i - 1:i + 2]
        chord = ((c - b) * caps[i - 1] + (b - a) * caps[i + 1]) / (c - a)
        assert caps[i] >= chord - 1e-10


@pytest.mark.parametrize("dmc", [bsc(0.3), random_channel(5, 3, 3)], ids=["bsc", "random3x3"])
def test_multiplier_matches_finite_difference(dmc):
    g0, gs = dmc.gamma_0, dmc.gamma_star
    for frac in (0.2, 0.4, 0.6, 0.8):
        g = g0 + frac * (gs - g0)
        sol = solve_capacity_cost(dmc, g, probe=False)
        assert capacity_derivative(dmc, g) == pytest.approx(sol.c_prime, abs=1e-12)


def test_solution_continuity():
    dmc = random_channel(7, 3, 3)
    g = dmc.gamma_0 + 0.5 * (dmc.gamma_star - dmc.gamma_0)
    ref = solve_capacity_cost(dmc, g)
    assert ref.uniqueness_flag
    dists = [np.abs(solve_capacity_cost(dmc, g + h, probe=False).p_star - ref.p_star).sum()
             for h in (1e-2, 1e-3, 1e-4)]
    assert dists[0] > dists[1] > dists[2]
