"""Monte Carlo realizations of the coding schemes.

Three schemes are covered: a single constant-composition type, the
three-type mixture whose cost levels come from the K minimizer, and the
feedback variant that looks at the first half of the block and switches to
a low-spread (timid) type when things are going well.

Trials draw the joint type of (X^n, Y^n) instead of the sequences. The
information density only depends on the joint type, and for a codeword drawn
uniformly from a type class the conditional law of the joint type is a
product of multinomials, one per input symbol. Multinomials are drawn by
inverting conditional binomials, one uniform per (input, output) cell, which
keeps two schemes with nearby compositions coupled under common seeds.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.special import logsumexp, ndtr
from scipy.stats import binom

from . import rng as streams
from .capacity import (binary_joint_terms, cc_log_prob_by_output_count, cc_output_prob,
                       check_q_ratio_bound, solve_capacity_cost)
from .channel import NType, density_matrix, quantize_to_type
from .errors import (BlocklengthError, CalibrationError, DegenerateError, InputError,
                     SizeError)
from .kfunction import ThreePointDist, _scaled, k_value

MIN_TRIALS = 1000
WINDOW_MARGIN = 0.02
MERGE_TOL = 1e-6
EXACT_N = 16
EXACT_M = 64
EXACT_ALPHABET = 4


def default_theta(n, exponent=0.75):
    if not 0.5 < exponent < 1:
        raise InputError("theta exponent must lie in (1/2, 1)")
    return float(n) ** (-exponent)


# ---------------------------------------------------------------- schemes


@dataclass(frozen=True, eq=False)
class SchemeSpec:
    """A mixture of constant-composition types.

    n is the blocklength that sets the cost levels and the decoding
    threshold; type_len is the length of each type (n without feedback, n/2
    for the first half of the feedback scheme).
    """

    n: int
    type_len: int
    r: float
    gamma: float
    v: float
    theta: float
    weights: tuple
    locs: tuple
    cost_levels: tuple
    solutions: tuple
    types: tuple
    capacity: float
    c_prime: float
    v_gamma: float
    support_size: int
    restricted: bool = False
    repairs: int = 0
    mean_cost: float = 0.0
    total_var: float = 0.0
    var_budget: float = 0.0

    @property
    def branches(self):
        return len(self.weights)

    def type_costs(self, cost):
        return np.array([np.dot(t.counts, cost) for t in self.types], dtype=float)

    def to_dict(self):
        return {
            "n": self.n, "type_len": self.type_len, "r": self.r, "gamma": self.gamma,
            "v": self.v, "theta": self.theta, "weights": list(self.weights),
            "locs": list(self.locs), "cost_levels": list(self.cost_levels),
            "solutions": [s.to_dict() for s in self.solutions],
            "types": [list(t.counts) for t in self.types],
            "capacity": self.capacity, "c_prime": self.c_prime, "v_gamma": self.v_gamma,
            "support_size": self.support_size, "restricted": self.restricted,
            "repairs": self.repairs, "mean_cost": self.mean_cost,
            "total_var": self.total_var, "var_budget": self.var_budget,
        }


def _level(solution, disp, n, r, pi):
    sv = math.sqrt(disp.v_gamma)
    return solution.gamma - (sv * pi - r) / (solution.c_prime * math.sqrt(n))


def minimal_blocklength(solution, disp, dmc, r, locs):
    """Smallest n for which every level Γ_j lies strictly inside (Γ_0, Γ*)."""
    sv = math.sqrt(disp.v_gamma)
    g, cp = solution.gamma, solution.c_prime
    need = 0.0
    for pi in locs:
        d = sv * pi - r
        room = (g - dmc.gamma_0) if d > 0 else (dmc.gamma_star - g)
        need = max(need, (abs(d) / (cp * room)) ** 2)
    return int(math.floor(need)) + 1


def admissible_window(solution, disp, dmc, r, n, margin=WINDOW_MARGIN):
    """Scaled locations pi whose levels keep a margin inside (Γ_0, Γ*)."""
    sv = math.sqrt(disp.v_gamma)
    a = solution.c_prime * math.sqrt(n) * (1 - margin)
    return ((r - a * (dmc.gamma_star - solution.gamma)) / sv,
            (r + a * (solution.gamma - dmc.gamma_0)) / sv)


def _merge_atoms(dist):
    order = np.argsort(dist.locs)
    locs, probs = [], []
    for i in order:
        x, p = dist.locs[i], dist.probs[i]
        if p <= 0:
            continue
        if locs and abs(x - locs[-1]) < MERGE_TOL:
            w = probs[-1] + p
            locs[-1] = (locs[-1] * probs[-1] + x * p) / w
            probs[-1] = w
        else:
            locs.append(x)
            probs.append(p)
    total = sum(probs)
    return [p / total for p in probs], locs


def _cost_moments(weights, Z):
    w = np.asarray(weights)
    mean = float(np.dot(w, Z))
    return mean, float(np.dot(w, (Z - mean) ** 2))


def _repair(types, weights, cost, gamma, budget, type_len):
    """Move single counts from the costliest to the cheapest symbol in the
    most expensive above-mean type until the mean and variance fit."""
    cost = np.asarray(cost)
    counts = [np.array(t.counts) for t in types]
    cheapest = int(np.argmin(cost))
    repairs = 0
    for _ in range(64 * len(cost) * len(types)):
        Z = np.array([c @ cost for c in counts], dtype=float)
        mean, var = _cost_moments(weights, Z)
        if mean <= type_len * gamma + 1e-9 and var <= budget + 1e-9:
            break
        above = [j for j in range(len(Z)) if Z[j] > mean and counts[j][cheapest] < type_len]
        if not above:
            break
        j = max(above, key=lambda j: (Z[j], -j))
        occupied = [a for a in range(len(cost)) if counts[j][a] > 0 and cost[a] > cost[cheapest]]
        a = max(occupied, key=lambda a: (cost[a], -a))
        counts[j][a] -= 1
        counts[j][cheapest] += 1
        repairs += 1
    return [NType(type_len, tuple(int(k) for k in c)) for c in counts], repairs


def _choose_dist(solution, disp, dmc, v, r, n, restrict, dist):
    sv, vp = _scaled(solution, disp, v)
    rp = r / sv
    if dist is None:
        dist = k_value(rp, vp).minimizer
    probs, locs = _merge_atoms(dist)
    lo, hi = admissible_window(solution, disp, dmc, r, n, margin=0.0)
    if all(lo < x < hi for x in locs):
        return probs, locs, False
    if not restrict:
        raise BlocklengthError(
            f"n={n} puts a cost level outside ({dmc.gamma_0}, {dmc.gamma_star}); "
            f"the minimizer needs n >= {minimal_blocklength(solution, disp, dmc, r, locs)}",
            min_n=minimal_blocklength(solution, disp, dmc, r, locs))
    box = admissible_window(solution, disp, dmc, r, n)
    if not box[0] < rp < box[1]:
        raise BlocklengthError(f"n={n} is too small for any admissible cost levels",
                               min_n=minimal_blocklength(solution, disp, dmc, r, [rp]))
    probs, locs = _merge_atoms(k_value(rp, vp, box=box).minimizer)
    return probs, locs, True


def _build_mixture(solution, disp, dmc, v, r, n, type_len, theta, restrict, dist):
    if disp.v_gamma <= 0:
        raise InputError("dispersion V(Γ) must be positive")
    if solution.saturated or solution.c_prime <= 0:
        raise InputError("the cost constraint is inactive at this Γ")
    if v < 0:
        raise InputError("variance budget must be nonnegative")
    probs, locs, restricted = _choose_dist(solution, disp, dmc, v, r, n, restrict, dist)
    levels, sols, types = [], [], []
    for x in locs:
        g = _level(solution, disp, n, r, x)
        sol = solution if abs(g - solution.gamma) < 1e-12 else solve_capacity_cost(dmc, g, probe=False)
        levels.append(float(g))
        sols.append(sol)
        types.append(quantize_to_type(sol.p_star, type_len, g, dmc.cost))
    budget = type_len ** 2 * v / n
    types, repairs = _repair(types, probs, dmc.cost, solution.gamma, budget, type_len)
    Z = np.array([np.dot(t.counts, dmc.cost) for t in types], dtype=float)
    mean, var = _cost_moments(probs, Z)
    return SchemeSpec(
        n=int(n), type_len=int(type_len), r=float(r), gamma=solution.gamma, v=float(v),
        theta=float(theta), weights=tuple(probs), locs=tuple(float(x) for x in locs),
        cost_levels=tuple(levels), solutions=tuple(sols), types=tuple(types),
        capacity=solution.capacity, c_prime=solution.c_prime, v_gamma=disp.v_gamma,
        support_size=len(solution.support), restricted=restricted, repairs=repairs,
        mean_cost=mean / type_len, total_var=var, var_budget=budget)


def build_nofeedback_scheme(solution, disp, dmc, v, r, n, theta=None, restrict=False, dist=None):
    """The three-type mixture at blocklength n.

    With restrict=True a minimizer whose levels would leave (Γ_0, Γ*) is
    replaced by the best distribution with atoms inside the admissible
    window for this n; otherwise a BlocklengthError carries the minimal n.
    """
    n = int(n)
    if n < dmc.J:
        raise InputError("n must be at least the input alphabet size")
    theta = default_theta(n) if theta is None else float(theta)
    return _build_mixture(solution, disp, dmc, v, r, n, n, theta, restrict, dist)


def constant_composition_scheme(solution, disp, dmc, n, r=0.0, theta=None):
    """Single-type scheme at [P*]_n, the v = 0 case of the mixture."""
    return build_nofeedback_scheme(solution, disp, dmc, 0.0, r, n, theta)


@dataclass(frozen=True, eq=False)
class FeedbackSchemeSpec:
    base: SchemeSpec
    beta: float
    beta_j: tuple
    delta: float
    halfway_thresholds: tuple
    timid_type: NType
    timid_solution: object
    switch_probs: tuple
    second_half_cost: float
    balance_residual: float
    total_var: float
    var_budget: float
    var_slack_bound: float
    calibration_trials: int
    calibration_seed: int

    @property
    def n(self):
        return self.base.n

    @property
    def variance_ok(self):
        return self.total_var <= self.var_budget + 1e-9

    def to_dict(self):
        return {
            "base": self.base.to_dict(), "beta": self.beta, "beta_j": list(self.beta_j),
            "delta": self.delta, "halfway_thresholds": list(self.halfway_thresholds),
            "timid_type": list(self.timid_type.counts), "switch_probs": list(self.switch_probs),
            "second_half_cost": self.second_half_cost,
            "balance_residual": self.balance_residual, "total_var": self.total_var,
            "var_budget": self.var_budget, "var_slack_bound": self.var_slack_bound,
            "calibration_trials": self.calibration_trials,
            "calibration_seed": self.calibration_seed,
        }


def _first_half_stats(base, dmc, j, trials, seed):
    """Samples of sum log W/Q*_j over the first half for branch j."""
    g = streams.stream(seed, streams.CALIBRATION, j)
    counts = np.tile(np.array(base.types[j].counts), (trials, 1))
    u = g.random((trials, dmc.J, dmc.K - 1))
    N = _draw_outputs(counts, dmc.transition, u)
    return _pair_sum(N, density_matrix(dmc, base.solutions[j].q_star))


def _half_thresholds(base, betas):
    m = base.type_len
    return tuple(m * s.capacity + b * math.sqrt(m) for s, b in zip(base.solutions, betas))


def build_feedback_scheme(solution, disp, dmc, v, r, n, beta, calibration_trials=20000,
                          seed=0, theta=None, restrict=False, dist=None):
    """Halfway-switch feedback scheme at even blocklength n.

    Branches whose level is above Γ use threshold beta; the others use
    beta + delta with the smallest delta >= 0 that keeps the estimated
    second-half cost per position at or below Γ.
    """
    n = int(n)
    if n % 2 or n < 2 * dmc.J:
        raise InputError("feedback blocklength must be even and at least twice the alphabet")
    if beta < 0:
        raise InputError("beta must be nonnegative")
    theta = default_theta(n) if theta is None else float(theta)
    half = n // 2
    base = _build_mixture(solution, disp, dmc, v, r, n, half, theta, restrict, dist)
    timid = quantize_to_type(solution.p_star, half, solution.gamma, dmc.cost)
    cost = dmc.cost
    zt = float(np.dot(timid.counts, cost))
    Z = base.type_costs(cost)
    cheap = [g <= solution.gamma for g in base.cost_levels]
    samples = [_first_half_stats(base, dmc, j, calibration_trials, seed)
               for j in range(base.branches)]
    root = math.sqrt(half)

    def switch_probs(delta):
        betas = [beta + delta if c else beta for c in cheap]
        thr = _half_thresholds(base, betas)
        return np.array([np.mean(s > t) for s, t in zip(samples, thr)]), betas

    def second_half(U):
        return float(np.dot(base.weights, U * zt + (1 - U) * Z)) / half

    U, betas = switch_probs(0.0)
    delta = 0.0
    if second_half(U) > solution.gamma:
        top = max((float(s.max()) - half * base.solutions[j].capacity) / root - beta
                  for j, s in enumerate(samples) if cheap[j]) + 1e-9
        U_top, _ = switch_probs(top)
        if second_half(U_top) > solution.gamma:
            res = second_half(U_top) - solution.gamma
            raise CalibrationError(
                f"second-half cost exceeds Γ by {res:.3g} even without switching cheap branches",
                residual=res)
        lo, hi = 0.0, top
        for _ in range(80):
            mid = 0.5 * (lo + hi)
            if second_half(switch_probs(mid)[0]) > solution.gamma:
                lo = mid
            else:
                hi = mid
        delta = hi
        U, betas = switch_probs(delta)
    cost2 = second_half(U)
    w = np.repeat(np.asarray(base.weights), 2) * np.column_stack([1 - U, U]).ravel()
    totals = np.column_stack([2 * Z, Z + zt]).ravel()
    mean = float(np.dot(w, totals))
    total_var = float(np.dot(w, (totals - mean) ** 2))
    phi_b = float(ndtr(beta / math.sqrt(disp.v_gamma)))
    nv = n * v
    return FeedbackSchemeSpec(
        base=base, beta=float(beta), beta_j=tuple(float(b) for b in betas), delta=float(delta),
        halfway_thresholds=tuple(t / half for t in _half_thresholds(base, betas)),
        timid_type=timid, timid_solution=solution, switch_probs=tuple(float(u) for u in U),
        second_half_cost=cost2, balance_residual=float(solution.gamma - cost2),
        total_var=total_var, var_budget=nv,
        # leading-order value of Var1 + Var2 + 2 sqrt(Var1 Var2); not a finite-n bound
        var_slack_bound=nv / 4 * (1 + phi_b + 2 * math.sqrt(phi_b)),
        calibration_trials=int(calibration_trials), calibration_seed=int(seed))


# ---------------------------------------------------------------- sampling


def _draw_outputs(counts, W, u):
    """Joint counts N[t, a, b] given input counts[t, a] and uniforms
    u[t, a, b] for b < K-1, by inverting conditional binomials."""
    T, J = counts.shape
    K = W.shape[1]
    N = np.zeros((T, J, K), dtype=np.int64)
    rem = counts.astype(np.int64)
    tail = np.ones(J)
    for b in range(K - 1):
        safe = np.where(tail > 1e-15, tail, 1.0)
        pb = np.where(tail > 1e-15, np.clip(W[:, b] / safe, 0.0, 1.0), 0.0)
        draw = binom.ppf(u[:, :, b], rem, pb[None, :])
        draw = np.clip(np.nan_to_num(draw), 0, rem).astype(np.int64)
        N[:, :, b] = draw
        rem = rem - draw
        tail = tail - W[:, b]
    N[:, :, K - 1] = rem
    return N


def _pair_sum(N, M):
    """sum_{a,b} N[..., a, b] M[a, b], in a fixed order."""
    J, K = M.shape
    out = np.zeros(N.shape[:-2])
    for a in range(J):
        for b in range(K):
            if M[a, b] != 0:
                out = out + N[..., a, b] * M[a, b]
    return out


def _log_w(dmc):
    W = dmc.transition
    return np.where(W > 0, np.log(np.where(W > 0, W, 1.0)), 0.0)


def _log_q(q):
    with np.errstate(divide="ignore"):
        return np.log(np.asarray(q, dtype=float))


def _product_score(M, logq):
    out = np.zeros(M.shape[0])
    for b in range(M.shape[1]):
        if M[:, b].any():
            out = out + M[:, b] * logq[b]
    return out


def _branches(seed, index, count, weights):
    u = streams.stream(seed, streams.BRANCH, index).random(count)
    j = np.searchsorted(np.cumsum(weights), u, side="right")
    return np.minimum(j, len(weights) - 1)


def _uniforms(seed, purpose, index, count, dmc):
    return streams.stream(seed, purpose, index).random((count, dmc.J, dmc.K - 1))


def _resolve_density(density, dmc):
    if density not in ("auto", "exact", "surrogate"):
        raise InputError("density must be auto, exact or surrogate")
    if density == "auto":
        return "exact" if (dmc.J, dmc.K) == (2, 2) else "surrogate"
    if density == "exact" and (dmc.J, dmc.K) != (2, 2):
        raise InputError("the exact mixture density at large n needs a 2x2 channel")
    return density


def _correction(solution, dmc, m, kappa):
    s = len(solution.support)
    return 0.5 * (s - 1) * math.log(m) + kappa


def _kappa(solution, dmc, kappa):
    if kappa is not None:
        return float(kappa)
    return check_q_ratio_bound(solution, dmc).kappa_hat


# ---------------------------------------------------------------- reports


@dataclass(frozen=True)
class SimReport:
    kind: str
    n: int
    trials: int
    seed: int
    threshold: float
    threshold_prob: float
    std_err: float
    theta: float
    lemma1_bound: float
    cost_mean: float
    cost_mean_se: float
    cost_var: float
    cost_var_se: float
    gamma: float
    v: float
    density: str
    checks: dict = field(default_factory=dict)
    extra: dict = field(default_factory=dict)

    @property
    def ok(self):
        return all(self.checks.values())

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


def _stats(values, counts):
    """Mean, variance, and their standard errors of a discrete sample given
    as distinct values with multiplicities. A single value gives 0 variance."""
    values = np.asarray(values, dtype=float)
    counts = np.asarray(counts, dtype=np.int64)
    T = int(counts.sum())
    ref = values[int(np.flatnonzero(counts)[0])]
    d = values - ref
    md = float(np.dot(counts, d)) / T
    dev = d - md
    var = float(np.dot(counts, dev ** 2)) / (T - 1)
    m4 = float(np.dot(counts, dev ** 4)) / T
    var_se = math.sqrt(max(m4 - var * var, 0.0) / T)
    return float(ref + md), var, math.sqrt(var / T), var_se


def _report(kind, scheme, trials, seed, hits, cat_values, cat_counts, density, extra):
    n = scheme.n
    thr = n * scheme.capacity + math.sqrt(n) * scheme.r + n * scheme.theta
    p = hits / trials
    mean, var, mean_se, var_se = _stats(cat_values, cat_counts)
    checks = {
        "cost_mean": bool(mean / n <= scheme.gamma + 3 * mean_se / n + 1e-12),
        "cost_var": bool(var <= n * scheme.v + 4 * var_se + 1e-9),
    }
    return SimReport(
        kind=kind, n=n, trials=int(trials), seed=int(seed), threshold=float(thr),
        threshold_prob=float(p), std_err=math.sqrt(p * (1 - p) / trials),
        theta=scheme.theta, lemma1_bound=float(p + math.exp(-n * scheme.theta)),
        cost_mean=mean / n, cost_mean_se=mean_se / n, cost_var=var, cost_var_se=var_se,
        gamma=scheme.gamma, v=scheme.v, density=density, checks=checks, extra=extra)


def _check_trials(trials):
    if int(trials) < MIN_TRIALS:
        raise InputError(f"at least {MIN_TRIALS} trials are required")


# ---------------------------------------------------------------- no feedback


class _NoFeedback:
    def __init__(self, scheme, dmc, density, kappa):
        self.scheme, self.dmc = scheme, dmc
        self.density = _resolve_density(density, dmc)
        self.counts = np.array([t.counts for t in scheme.types], dtype=np.int64)
        self.logw = _log_w(dmc)
        n = scheme.n
        self.thr = n * scheme.capacity + math.sqrt(n) * scheme.r + n * scheme.theta
        lp = np.log(np.asarray(scheme.weights))
        if self.density == "exact":
            tabs = [cc_log_prob_by_output_count(t.counts, dmc) for t in scheme.types]
            self.log_pw = logsumexp(np.vstack(tabs) + lp[:, None], axis=0)
        else:
            base = scheme.solutions[int(np.argmin([abs(g - scheme.gamma)
                                                   for g in scheme.cost_levels]))]
            self.kappa = _kappa(base, dmc, kappa)
            self.corr = _correction(base, dmc, n, self.kappa)
            self.logq = [_log_q(s.q_star) for s in scheme.solutions]

    def chunk(self, seed, index, count):
        j = _branches(seed, index, count, self.scheme.weights)
        counts = self.counts[j]
        first = counts // 2
        N = (_draw_outputs(first, self.dmc.transition,
                           _uniforms(seed, streams.CHANNEL_A, index, count, self.dmc))
             + _draw_outputs(counts - first, self.dmc.transition,
                             _uniforms(seed, streams.CHANNEL_B, index, count, self.dmc)))
        logw = _pair_sum(N, self.logw)
        if self.density == "exact":
            dens = logw - self.log_pw[N[:, :, 1].sum(axis=1)]
        else:
            M = N.sum(axis=1)
            best = np.max([_product_score(M, q) for q in self.logq], axis=0)
            dens = logw - best - self.corr
        return dens <= self.thr, j


def run_nofeedback_trials(scheme, dmc, trials, seed, threads=1, density="auto", kappa=None):
    """Frequency of the threshold event i(X;Y) <= log M + n theta for the
    mixture scheme, with the bound P(event) + exp(-n theta)."""
    _check_trials(trials)
    sim = _NoFeedback(scheme, dmc, density, kappa)
    parts = streams.map_chunks(lambda i, c: sim.chunk(seed, i, c), trials, threads)
    hits = sum(int(h.sum()) for h, _ in parts)
    cats = sum(np.bincount(j, minlength=scheme.branches) for _, j in parts)
    extra = {"restricted": scheme.restricted, "branch_counts": [int(c) for c in cats]}
    if sim.density == "surrogate":
        extra["kappa_hat"] = sim.kappa
    return _report("nofeedback", scheme, trials, seed, hits, scheme.type_costs(dmc.cost), cats,
                   sim.density, extra)


# ---------------------------------------------------------------- feedback


class _Feedback:
    def __init__(self, fb, dmc, density, kappa):
        self.fb, self.dmc = fb, dmc
        base = fb.base
        self.density = _resolve_density(density, dmc)
        self.counts = np.array([t.counts for t in base.types], dtype=np.int64)
        self.timid = np.array(fb.timid_type.counts, dtype=np.int64)
        self.logw = _log_w(dmc)
        self.dens1 = [density_matrix(dmc, s.q_star) for s in base.solutions]
        half = base.type_len
        self.half_thr = np.array([t * half for t in fb.halfway_thresholds])
        n = base.n
        self.thr = n * base.capacity + math.sqrt(n) * base.r + n * base.theta
        if self.density == "exact":
            self.table = self._exact_table()
        else:
            self.kappa = _kappa(fb.timid_solution, dmc, kappa)
            self.corr = 2 * _correction(fb.timid_solution, dmc, half, self.kappa)
            self.logq = [_log_q(s.q_star) for s in base.solutions]
            self.logq_t = _log_q(fb.timid_solution.q_star)

    def _exact_table(self):
        base, dmc = self.fb.base, self.dmc
        q_t = cc_log_prob_by_output_count(self.fb.timid_type.counts, dmc)
        terms = []
        for j, t in enumerate(base.types):
            logw, (n00, n01, n10, n11), valid = binary_joint_terms(t.counts, dmc)
            N = np.stack([np.stack([n00, n01], -1), np.stack([n10, n11], -1)], -2)
            up = valid & (_pair_sum(N, self.dens1[j]) > self.half_thr[j])
            s_up = logsumexp(np.where(up, logw, -np.inf), axis=1)
            s_dn = logsumexp(np.where(valid & ~up, logw, -np.inf), axis=1)
            q_j = cc_log_prob_by_output_count(t.counts, dmc)
            with np.errstate(invalid="ignore"):
                terms.append(math.log(base.weights[j]) + np.logaddexp(
                    s_up[:, None] + q_t[None, :], s_dn[:, None] + q_j[None, :]))
        return logsumexp(np.stack(terms), axis=0)

    def chunk(self, seed, index, count):
        dmc = self.dmc
        j = _branches(seed, index, count, self.fb.base.weights)
        c1 = self.counts[j]
        N1 = _draw_outputs(c1, dmc.transition,
                           _uniforms(seed, streams.CHANNEL_A, index, count, dmc))
        stat = np.zeros(count)
        for b in range(len(self.dens1)):
            sel = j == b
            if sel.any():
                stat[sel] = _pair_sum(N1[sel], self.dens1[b])
        switch = stat > self.half_thr[j]
        c2 = np.where(switch[:, None], self.timid[None, :], c1)
        N2 = _draw_outputs(c2, dmc.transition,
                           _uniforms(seed, streams.CHANNEL_B, index, count, dmc))
        logw = _pair_sum(N1 + N2, self.logw)
        if self.density == "exact":
            dens = logw - self.table[N1[:, :, 1].sum(axis=1), N2[:, :, 1].sum(axis=1)]
        else:
            M1, M2 = N1.sum(axis=1), N2.sum(axis=1)
            s2t = _product_score(M2, self.logq_t)
            best = np.max([_product_score(M1, q) + np.maximum(s2t, _product_score(M2, q))
                           for q in self.logq], axis=0)
            dens = logw - best - self.corr
        return dens <= self.thr, 2 * j + switch


def run_feedback_trials(fb, dmc, trials, seed, threads=1, density="auto", kappa=None):
    """Threshold-event frequency and error bound of the halfway-switch scheme."""
    _check_trials(trials)
    sim = _Feedback(fb, dmc, density, kappa)
    base = fb.base
    parts = streams.map_chunks(lambda i, c: sim.chunk(seed, i, c), trials, threads)
    hits = sum(int(h.sum()) for h, _ in parts)
    cats = sum(np.bincount(c, minlength=2 * base.branches) for _, c in parts)
    Z = base.type_costs(dmc.cost)
    zt = float(np.dot(fb.timid_type.counts, dmc.cost))
    second = np.column_stack([Z, np.full_like(Z, zt)]).ravel()
    totals = np.repeat(Z, 2) + second
    m2, v2, se2, _ = _stats(second, cats)
    m1, v1, _, _ = _stats(np.repeat(Z, 2), cats)
    _, vt, _, _ = _stats(totals, cats)
    half = base.type_len
    extra = {
        "switch_rate": float(cats[1::2].sum() / trials),
        "second_half_cost_mean": m2 / half, "second_half_cost_se": se2 / half,
        "first_half_var": v1, "second_half_var": v2, "covariance": 0.5 * (vt - v1 - v2),
        "beta": fb.beta, "delta": fb.delta, "restricted": base.restricted,
        "category_counts": [int(c) for c in cats],
    }
    if sim.density == "surrogate":
        extra["kappa_hat"] = sim.kappa
    rep = _report("feedback", base, trials, seed, hits, totals, cats, sim.density, extra)
    rep.checks["second_half_cost"] = bool(m2 / half <= base.gamma + 3 * se2 / half + 1e-12)
    return rep


def paired_comparison(scheme, fb, dmc, trials, seed, threads=1, density="auto"):
    """Non-feedback minus feedback threshold probability under common seeds,
    with the paired standard error."""
    _check_trials(trials)
    a = _NoFeedback(scheme, dmc, density, None)
    b = _Feedback(fb, dmc, density, None)

    def both(i, c):
        ha, _ = a.chunk(seed, i, c)
        hb, _ = b.chunk(seed, i, c)
        d = ha.astype(np.int64) - hb.astype(np.int64)
        return int(ha.sum()), int(hb.sum()), int(d.sum()), int((d * d).sum())

    parts = streams.map_chunks(both, trials, threads)
    na, nb, s1, s2 = (sum(p[k] for p in parts) for k in range(4))
    diff = s1 / trials
    var = (s2 / trials - diff * diff) * trials / (trials - 1)
    se = math.sqrt(max(var, 0.0) / trials)
    return {"trials": int(trials), "seed": int(seed), "nofeedback_prob": na / trials,
            "feedback_prob": nb / trials, "difference": diff, "std_err": se,
            "z": diff / se if se > 0 else 0.0}


# ---------------------------------------------------------------- exact code


@dataclass(frozen=True)
class ExactCodeReport:
    n: int
    messages: int
    trials: int
    seed: int
    theta: float
    error_rate: float
    std_err: float
    lemma1_bound: float
    lemma1_std_err: float
    holds: bool

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


def _as_mixture(source):
    if isinstance(source, NType):
        return (1.0,), (source,)
    if isinstance(source, SchemeSpec):
        return source.weights, source.types
    raise InputError("source must be an NType or a SchemeSpec")


def run_exact_random_code(dmc, source, n, num_messages, trials, seed, theta=None,
                          codebook=None, threads=1):
    """Random codebooks decoded by maximum likelihood, next to the threshold
    bound for the same ensemble, both from the same trials.

    Each trial draws a fresh codebook from source (an NType or a SchemeSpec
    of length n) unless a fixed codebook array is given, sends a uniform
    message and decodes to the most likely codeword, ties going to the
    lowest index.
    """
    n, M = int(n), int(num_messages)
    if n > EXACT_N or M > EXACT_M or max(dmc.J, dmc.K) > EXACT_ALPHABET:
        raise SizeError(f"exact codes need n <= {EXACT_N}, M <= {EXACT_M} and alphabets "
                        f"<= {EXACT_ALPHABET}")
    if M < 1 or trials < 1:
        raise InputError("need at least one message and one trial")
    theta = default_theta(n) if theta is None else float(theta)
    weights, types = _as_mixture(source)
    if any(t.n != n for t in types):
        raise InputError("type length does not match n")
    fixed = None
    if codebook is not None:
        fixed = np.asarray(codebook, dtype=np.int64)
        if fixed.shape != (M, n) or fixed.min() < 0 or fixed.max() >= dmc.J:
            raise InputError("codebook must be an M x n array of input indices")
    bases = [np.repeat(np.arange(dmc.J), t.counts) for t in types]
    logw = _log_w(dmc)
    dead = dmc.transition <= 0
    cumW = np.cumsum(dmc.transition, axis=1)
    thr = math.log(M) + n * theta
    log_weights = np.log(np.asarray(weights))

    def log_pw(Y):
        if fixed is not None:
            # the ensemble is the codebook itself, uniform over messages
            P = np.stack([np.prod(dmc.transition[fixed[m][None, :], Y], axis=1) for m in range(M)])
            return np.log(P.mean(axis=0))
        with np.errstate(divide="ignore"):
            return logsumexp(np.stack([lw + np.log(cc_output_prob(t, dmc, Y))
                                       for lw, t in zip(log_weights, types)]), axis=0)

    def chunk(index, count):
        if fixed is not None:
            X = np.broadcast_to(fixed, (count, M, n))
        else:
            g = streams.stream(seed, streams.CODEBOOK, index)
            j = np.searchsorted(np.cumsum(weights), g.random((count, M)), side="right")
            j = np.minimum(j, len(weights) - 1)
            perm = np.argsort(g.random((count, M, n)), axis=2)
            base = np.stack(bases)[j]
            X = np.take_along_axis(base, perm, axis=2)
        msg = streams.stream(seed, streams.MESSAGE, index).integers(0, M, count)
        sent = X[np.arange(count), msg]
        u = streams.stream(seed, streams.CHANNEL_A, index).random((count, n))
        Y = np.minimum((u[:, :, None] >= cumW[sent]).sum(axis=2), dmc.K - 1)
        pair = X * dmc.K + Y[:, None, :]
        N = np.zeros((count, M, dmc.J * dmc.K), dtype=np.int64)
        for c in range(dmc.J * dmc.K):
            N[:, :, c] = (pair == c).sum(axis=2)
        N = N.reshape(count, M, dmc.J, dmc.K)
        ll = _pair_sum(N, logw)
        ll = np.where((N * dead).sum(axis=(2, 3)) > 0, -np.inf, ll)
        decoded = np.argmax(ll, axis=1)
        dens = ll[np.arange(count), msg] - log_pw(Y)
        return int((decoded != msg).sum()), int((dens <= thr).sum())

    parts = streams.map_chunks(chunk, trials, threads)
    errors = sum(p[0] for p in parts)
    events = sum(p[1] for p in parts)
    pe, pb = errors / trials, events / trials
    se = math.sqrt(pe * (1 - pe) / trials)
    bound = pb + math.exp(-n * theta)
    return ExactCodeReport(n, M, int(trials), int(seed), theta, pe, se, bound,
                           math.sqrt(pb * (1 - pb) / trials), bool(pe <= bound + 3 * se))


# ---------------------------------------------------------------- log-ratio tail


def _kl(p, q):
    p, q = np.asarray(p, dtype=float), np.asarray(q, dtype=float)
    pos = p > 0
    if np.any(pos & (q <= 0)):
        return math.inf
    return float(np.sum(p[pos] * np.log(p[pos] / q[pos])))


def hoeffding_ratio_bound(q_prime, q, n, c_n, gamma_floor):
    """Upper bound on P(log q(Y^n)/q'(Y^n) >= c_n) for Y^n i.i.d. q'."""
    qp, qq = np.asarray(q_prime, dtype=float), np.asarray(q, dtype=float)
    if qp.shape != qq.shape:
        raise InputError("distributions must share an alphabet")
    if not gamma_floor > 0 or qp.min() < gamma_floor - 1e-15:
        raise InputError("gamma_floor must be positive and at most min q'")
    if c_n < 0:
        raise InputError("c_n must be nonnegative")
    D = _kl(qp, qq)
    if not D > 0 or np.allclose(qp, qq, rtol=0, atol=0):
        raise DegenerateError("D(q'||q) = 0: the bound is degenerate")
    g2 = gamma_floor ** 2
    return math.exp(-n * D * g2 / 9) * math.exp(-2 * c_n * g2 / 9) * math.exp(-c_n ** 2 * g2 / (9 * n * D))


def ratio_exceedance(q_prime, q, n, c_n, trials, seed, threads=1):
    """Monte Carlo frequency of log q(Y^n)/q'(Y^n) >= c_n under q'."""
    qp, qq = np.asarray(q_prime, dtype=float), np.asarray(q, dtype=float)
    lr = np.log(qq) - np.log(qp)

    def chunk(index, count):
        counts = streams.stream(seed, streams.CHECKS, index).multinomial(n, qp, size=count)
        return int((_product_score(counts, lr) >= c_n).sum())

    hits = sum(streams.map_chunks(chunk, trials, threads))
    return hits / trials
