"""Capacity-cost function, its KKT certificate, dispersion and the
finite-n constant-composition quantities.

The solver runs Blahut-Arimoto on the Lagrangian I(P,W) - s c(P) for a fixed
multiplier s, searches s so that c(P_s) = Γ, and then polishes the fixed point
with Newton steps on the KKT system restricted to the support.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog
from scipy.special import gammaln, logsumexp

from .channel import NType, compositions, density_matrix, divergences, quantize_to_type
from .errors import (ConvergenceError, DerivativeError, InfeasibleError, InputError,
                     SizeError)

MAX_ITER = 100_000
STAGES = (30, 100, 300, 1_000, 3_000, 10_000, MAX_ITER - 14_430)
SUPPORT_TOL = 1e-9
PROBE_STARTS = 16
PROBE_SEED = 20240607
STATE_CAP = 2_000_000
POLISH_ENUM_MAX = 10


@dataclass(frozen=True, eq=False)
class CapacityCostSolution:
    gamma: float
    capacity: float
    p_star: np.ndarray
    q_star: np.ndarray
    c_prime: float
    kkt_residual: float
    uniqueness_flag: bool | None = None
    saturated: bool = False
    iterations: int = 0

    @property
    def support(self):
        return tuple(int(a) for a in np.flatnonzero(self.p_star > SUPPORT_TOL))

    def to_dict(self):
        return {
            "gamma": self.gamma,
            "capacity": self.capacity,
            "p_star": self.p_star.tolist(),
            "q_star": self.q_star.tolist(),
            "c_prime": self.c_prime,
            "kkt_residual": self.kkt_residual,
            "uniqueness_flag": self.uniqueness_flag,
            "saturated": self.saturated,
            "iterations": self.iterations,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            gamma=float(d["gamma"]), capacity=float(d["capacity"]),
            p_star=np.array(d["p_star"], dtype=float), q_star=np.array(d["q_star"], dtype=float),
            c_prime=float(d["c_prime"]), kkt_residual=float(d["kkt_residual"]),
            uniqueness_flag=d.get("uniqueness_flag"), saturated=bool(d.get("saturated", False)),
            iterations=int(d.get("iterations", 0)))


@dataclass(frozen=True, eq=False)
class DispersionInfo:
    nu: np.ndarray
    v_gamma: float
    nu_min: float
    nu_max: float
    i_max: float

    def to_dict(self):
        return {"nu": self.nu.tolist(), "v_gamma": self.v_gamma, "nu_min": self.nu_min,
                "nu_max": self.nu_max, "i_max": self.i_max}


@dataclass(frozen=True)
class KKTReport:
    equality_residual: float
    inequality_violation: float
    per_symbol: tuple

    @property
    def max_residual(self):
        return max(self.equality_residual, self.inequality_violation)


@dataclass(frozen=True)
class QuantizedQuantities:
    n: int
    type_n: NType
    c_n: float
    v_n: float
    support_match: bool
    c_lower_bound: float
    v_gap_bound: float
    part1_holds: bool | None
    part2_holds: bool | None


class _Kernel:
    """Cached per-channel arrays for the fixed-multiplier iteration."""

    def __init__(self, dmc):
        W = dmc.transition
        self.W = W
        self.cost = dmc.cost
        self.negent = np.sum(np.where(W > 0, W * np.log(np.where(W > 0, W, 1.0)), 0.0), axis=1)

    def divergences(self, Q):
        logQ = np.log(np.maximum(Q, 1e-300))
        return self.negent - (self.W * logQ).sum(axis=1) if self.W.shape[1] > 0 else self.negent

    def iterate(self, s, P, tol, max_iter=MAX_ITER):
        """Blahut-Arimoto for max_P I(P,W) - s c(P), stopped on the duality gap."""
        W, cost = self.W, self.cost
        for it in range(1, max_iter + 1):
            Q = P @ W
            D = self.negent - W @ np.log(np.maximum(Q, 1e-300))
            g = D - s * cost
            U = g.max()
            gap = U - P @ g
            if gap < tol:
                return P, it, gap
            w = P * np.exp(g - U)
            P = w / w.sum()
        return P, max_iter, gap


def _newton_on_support(kern, S, P, s, gamma):
    """Newton iteration for the KKT equalities with the support fixed to S.
    Returns (P_S, s, lambda) or None when singular or not converging."""
    W, cost = kern.W, kern.cost
    k = len(S)
    free_s = gamma is not None
    if k == 0 or (free_s and k < 2):
        return None
    PS0 = P[S] if P[S].sum() > 0 else np.full(k, 1.0 / k)
    PS0 = PS0 / PS0.sum()
    x = np.concatenate([PS0, [s] if free_s else [], [0.0]])
    x[-1] = float(np.dot(PS0, kern.divergences(PS0 @ W[S])[S] - s * cost[S]))
    for _ in range(50):
        PS = x[:k]
        sv = x[k] if free_s else s
        lam = x[-1]
        Q = PS @ W[S]
        if np.any(Q[(W[S] > 0).any(axis=0)] <= 0) or not np.all(np.isfinite(x)):
            return None
        D = kern.divergences(Q)
        F = [D[S] - sv * cost[S] - lam, [PS.sum() - 1.0]]
        if free_s:
            F.append([PS @ cost[S] - gamma])
        F = np.concatenate(F)
        if np.max(np.abs(F)) < 1e-14:
            break
        safeQ = np.where(Q > 0, Q, 1.0)
        dD = -(W[S] / safeQ) @ W[S].T
        m = len(F)
        Jm = np.zeros((m, m))
        Jm[:k, :k] = dD
        if free_s:
            Jm[:k, k] = -cost[S]
            Jm[k + 1, :k] = cost[S]
        Jm[:k, -1] = -1.0
        Jm[k, :k] = 1.0
        if np.linalg.cond(Jm) > 1e12:
            return None
        step = np.linalg.solve(Jm, -F)
        x = x + step
        if np.max(np.abs(step)) < 1e-15:
            break
    else:
        return None
    return x[:k], (x[k] if free_s else s), x[-1]


def _kkt_point(kern, S, P, s, gamma):
    """Full-length (P, s) if the Newton point on S satisfies every KKT condition."""
    sol = _newton_on_support(kern, S, P, s, gamma)
    if sol is None:
        return None
    PS, new_s, lam = sol
    if np.any(PS < 0):
        return None
    newP = np.zeros(len(P))
    newP[S] = PS
    g = kern.divergences(newP @ kern.W) - new_s * kern.cost
    if np.any(g > lam + 1e-12):
        return None
    return newP, float(new_s)


def _newton_polish(kern, P, s, gamma):
    """Solve the KKT equalities on the support of P with Newton steps.

    With gamma=None the multiplier is held at s (unconstrained or fixed-s
    problem); otherwise c(P) = gamma is imposed and s is an unknown. Returns
    (P, s) or None when the system is singular or the active set is wrong.
    An active-set walk from the support of P comes first; if it cycles, every
    support of at most K symbols is tried in order of its mass under P.
    """
    W = kern.W
    J = len(P)
    S = [a for a in range(J) if P[a] > SUPPORT_TOL]
    tried = set()
    for _ in range(2 * J + 2):
        if tuple(S) in tried:
            break
        tried.add(tuple(S))
        sol = _newton_on_support(kern, S, P, s, gamma)
        if sol is None:
            if len(S) <= 1:
                break
            # near-duplicate rows make the system singular; drop the
            # lightest symbol and let the violation check re-add it if needed
            drop = S[int(np.argmin(P[S]))]
            S = [a for a in S if a != drop]
            continue
        PS, new_s, lam = sol
        newP = np.zeros(J)
        newP[S] = PS
        neg = [a for a, v in zip(S, PS) if v < 0]
        if neg:
            S = [a for a in S if a not in neg]
            continue
        g = kern.divergences(newP @ W) - new_s * kern.cost
        viol = [a for a in range(J) if a not in S and g[a] > lam + 1e-12]
        if viol:
            S = sorted(S + viol)
            continue
        return np.maximum(newP, 0.0), float(new_s)
    if J > POLISH_ENUM_MAX:
        return None
    cands = [c for k in range(1, min(J, W.shape[1]) + 1)
             for c in itertools.combinations(range(J), k) if c not in tried]
    cands.sort(key=lambda c: -P[list(c)].sum())
    for c in cands:
        out = _kkt_point(kern, list(c), P, s, gamma)
        if out is not None:
            return np.maximum(out[0], 0.0), out[1]
    return None


def _fixed_multiplier(kern, s, start, tol):
    """Maximizer of I(P,W) - s c(P): Blahut-Arimoto runs of growing length,
    each followed by an attempted Newton polish of the current iterate.
    Returns (P, iterations, converged)."""
    # keep every symbol alive: the iteration cannot revive an exact zero
    P = 0.999 * start + 0.001 / len(start)
    it = 0
    for budget in STAGES:
        P, used, gap = kern.iterate(s, P, tol, max_iter=budget)
        it += used
        pol = _newton_polish(kern, P, s, None)
        if pol is not None:
            return pol[0], it, True
        if gap < tol:
            return P, it, True
    return P, it, False


def _unconstrained(kern, tol):
    J = kern.W.shape[0]
    P, it, ok = _fixed_multiplier(kern, 0.0, np.full(J, 1.0 / J), tol)
    if not ok:
        raise ConvergenceError("unconstrained Blahut-Arimoto did not converge")
    # a unique optimum needs linearly independent rows on the support
    S = P > SUPPORT_TOL
    unique = np.linalg.matrix_rank(kern.W[S]) == int(S.sum())
    return P, it, unique and _newton_polish(kern, P, 0.0, None) is not None


def saturation_cost(dmc, tol=1e-10):
    """Γ*: the least cost among capacity-achieving input distributions.

    The capacity-achieving output law Q* is unique, so the optimal inputs are
    {P : PW = Q*, supp P within the symbols where D(W(.|a)||Q*) = C}; when
    that set is a single point its cost is returned, otherwise a linear
    program picks the cheapest member.
    """
    kern = _Kernel(dmc)
    P, _, polished = _unconstrained(kern, tol)
    if polished:
        return float(P @ dmc.cost)
    Q = P @ dmc.transition
    D = kern.divergences(Q)
    C = float(P @ D)
    S = np.flatnonzero(D >= C - 1e-7)
    W = dmc.transition[S]
    slack = 1e-7
    A_ub = np.vstack([W.T, -W.T])
    b_ub = np.concatenate([Q + slack, -(Q - slack)])
    res = linprog(dmc.cost[S], A_ub=A_ub, b_ub=b_ub, A_eq=np.ones((1, len(S))), b_eq=[1.0],
                  bounds=[(0, None)] * len(S), method="highs")
    if not res.success:
        return float(P @ dmc.cost)
    return float(res.fun)


def _search_multiplier(kern, gamma, tol):
    """Bracketed Illinois search for s with c(P_s) = gamma."""
    J = kern.W.shape[0]
    cost = kern.cost
    total = 0
    P = np.full(J, 1.0 / J)

    def solve(s, start):
        nonlocal total
        Ps, it, ok = _fixed_multiplier(kern, s, start, tol)
        total += it
        if not ok:
            raise ConvergenceError(f"Blahut-Arimoto did not converge at multiplier {s:.6g}")
        return Ps

    lo_s, lo_P = 0.0, None
    lo_g = None
    s = 1.0
    P_hi = solve(s, P)
    while P_hi @ cost >= gamma:
        lo_s, lo_P, lo_g = s, P_hi, float(P_hi @ cost - gamma)
        s *= 2.0
        if s > 1e8:
            raise ConvergenceError("cost multiplier diverged; gamma is too close to the minimum cost")
        P_hi = solve(s, P_hi)
    hi_s, hi_P, hi_g = s, P_hi, float(P_hi @ cost - gamma)
    if lo_P is None:
        lo_P = solve(0.0, P)
        lo_g = float(lo_P @ cost - gamma)
    lo_w, hi_w = lo_g, hi_g
    side = 0
    for _ in range(200):
        if hi_s - lo_s <= 1e-13 * (1.0 + hi_s) or min(abs(lo_g), abs(hi_g)) < 1e-13:
            break
        denom = lo_w - hi_w
        mid = hi_s - hi_w * (hi_s - lo_s) / denom if denom > 0 else 0.5 * (lo_s + hi_s)
        if not lo_s < mid < hi_s:
            mid = 0.5 * (lo_s + hi_s)
        start = lo_P if abs(lo_g) < abs(hi_g) else hi_P
        Pm = solve(mid, start)
        gm = float(Pm @ cost - gamma)
        if gm >= 0:
            lo_s, lo_P, lo_g, lo_w = mid, Pm, gm, gm
            if side == -1:
                hi_w *= 0.5
            side = -1
        else:
            hi_s, hi_P, hi_g, hi_w = mid, Pm, gm, gm
            if side == 1:
                lo_w *= 0.5
            side = 1
    lo_true = float(lo_P @ cost - gamma)
    hi_true = float(hi_P @ cost - gamma)
    if abs(lo_true) <= abs(hi_true):
        P, s = lo_P, lo_s
    else:
        P, s = hi_P, hi_s
    if abs(P @ cost - gamma) > 1e-9 and lo_true > 0 > hi_true:
        # c(P_s) jumps across gamma: both endpoints maximize the same
        # Lagrangian, so a mixture of them does too.
        w = hi_true / (hi_true - lo_true)
        P = w * lo_P + (1 - w) * hi_P
        s = 0.5 * (lo_s + hi_s)
    return P, s, total


def solve_capacity_cost(dmc, gamma, tol=1e-10, probe=True):
    """Maximize I(P,W) subject to c(P) <= gamma.

    Returns a CapacityCostSolution whose c_prime is the Lagrange multiplier
    of the cost constraint (zero once gamma reaches the saturation cost).
    """
    gamma = float(gamma)
    if tol <= 0:
        raise InputError("tol must be positive")
    if gamma <= dmc.gamma_0:
        raise InfeasibleError(f"gamma={gamma} is not above the minimum cost {dmc.gamma_0}")
    kern = _Kernel(dmc)
    gstar = dmc.gamma_star
    if gamma >= gstar:
        P, it, polished = _unconstrained(kern, tol)
        if P @ dmc.cost > gamma + 1e-12:
            P = _cheapest_optimal(dmc, kern, P)
        s = 0.0
        saturated = True
    else:
        P, s, it = _search_multiplier(kern, gamma, tol)
        pol = _newton_polish(kern, P, s, gamma)
        if pol is not None:
            P, s = pol
        saturated = False
    Q = P @ dmc.transition
    C = float(P @ kern.divergences(Q))
    flag = _probe_uniqueness(kern, s, P, tol) if probe else None
    sol = CapacityCostSolution(gamma=gamma, capacity=C, p_star=P, q_star=Q, c_prime=float(s),
                               kkt_residual=0.0, uniqueness_flag=flag, saturated=saturated,
                               iterations=int(it))
    rep = verify_kkt(sol, dmc)
    return CapacityCostSolution(gamma=gamma, capacity=C, p_star=P, q_star=Q, c_prime=float(s),
                                kkt_residual=rep.max_residual, uniqueness_flag=flag,
                                saturated=saturated, iterations=int(it))


def _cheapest_optimal(dmc, kern, P):
    Q = P @ dmc.transition
    D = kern.divergences(Q)
    C = float(P @ D)
    S = np.flatnonzero(D >= C - 1e-7)
    W = dmc.transition[S]
    slack = 1e-9
    res = linprog(dmc.cost[S], A_ub=np.vstack([W.T, -W.T]),
                  b_ub=np.concatenate([Q + slack, -(Q - slack)]),
                  A_eq=np.ones((1, len(S))), b_eq=[1.0], bounds=[(0, None)] * len(S),
                  method="highs")
    if not res.success:
        return P
    out = np.zeros(dmc.J)
    out[S] = np.maximum(res.x, 0)
    return out / out.sum()


def _probe_uniqueness(kern, s, P_ref, tol):
    rng = np.random.default_rng(PROBE_SEED)
    J = len(P_ref)
    for _ in range(PROBE_STARTS):
        start = rng.dirichlet(np.ones(J))
        P, _, ok = _fixed_multiplier(kern, s, start, tol)
        if not ok:
            return False
        if np.abs(P - P_ref).sum() > 1e-6:
            return False
    return True


def verify_kkt(solution, dmc):
    """Residuals of D(W(.|a)||Q*) = C - C'(Γ - c(a)) on the support and of
    the matching inequality off it."""
    D = divergences(dmc, solution.q_star)
    rhs = solution.capacity - solution.c_prime * (solution.gamma - dmc.cost)
    if solution.saturated:
        rhs = np.full(dmc.J, solution.capacity)
    dev = D - rhs
    supp = solution.p_star > SUPPORT_TOL
    eq = float(np.max(np.abs(dev[supp]))) if supp.any() else 0.0
    ineq = float(np.max(np.maximum(dev[~supp], 0.0))) if (~supp).any() else 0.0
    return KKTReport(eq, ineq, tuple(float(x) for x in dev))


def capacity_derivative(dmc, gamma, tol=1e-10):
    """C'(Γ) from the multiplier, checked against a central difference."""
    g0, gs = dmc.gamma_0, dmc.gamma_star
    if not g0 < gamma < gs:
        raise InputError(f"gamma must lie strictly between {g0} and {gs}")
    sol = solve_capacity_cost(dmc, gamma, tol, probe=False)
    h = 1e-4 * (gs - g0)
    lo = max(gamma - h, g0 + 0.5 * (gamma - g0))
    hi = min(gamma + h, gs)
    c_lo = solve_capacity_cost(dmc, lo, tol, probe=False).capacity
    c_hi = solve_capacity_cost(dmc, hi, tol, probe=False).capacity
    fd = (c_hi - c_lo) / (hi - lo)
    if abs(fd - sol.c_prime) > max(1e-3, 10 * tol):
        raise DerivativeError(
            f"multiplier {sol.c_prime:.6g} and finite difference {fd:.6g} disagree")
    return sol.c_prime


def dispersion(solution, dmc):
    I = density_matrix(dmc, solution.q_star)
    W = dmc.transition
    mean = (W * I).sum(axis=1)
    nu = (W * (I - mean[:, None]) ** 2).sum(axis=1)
    nu = np.maximum(nu, 0.0)
    imax = float(np.max(np.abs(I[W > 0])))
    return DispersionInfo(nu=nu, v_gamma=float(solution.p_star @ nu), nu_min=float(nu.min()),
                          nu_max=float(nu.max()), i_max=imax)


def quantized_quantities(solution, disp, dmc, n):
    """[P*]_n with its constant-composition capacity and dispersion."""
    n = int(n)
    if n < dmc.J:
        raise InputError("n must be at least the input alphabet size")
    t = quantize_to_type(solution.p_star, n, solution.gamma, dmc.cost)
    D = divergences(dmc, solution.q_star)
    c_n = float(t.dist @ D)
    v_n = float(t.dist @ disp.nu)
    match = set(t.support()) == set(solution.support)
    c_lb = solution.capacity - 2 * solution.c_prime * dmc.J * dmc.c_max / n
    v_gap = 2 * dmc.J * disp.nu_max / n
    p1 = p2 = None
    if match:
        p1 = bool(c_lb - 1e-12 <= c_n <= solution.capacity + 1e-12)
        p2 = bool(abs(v_n - disp.v_gamma) <= v_gap + 1e-12)
    return QuantizedQuantities(n, t, c_n, v_n, match, c_lb, v_gap, p1, p2)


def cc_output_prob(t, dmc, y):
    """Exact output probability under a uniformly drawn member of the type
    class of t, for one sequence y (shape (n,)) or a batch (shape (m, n)).

    The sum over the type class is done by dynamic programming over the
    counts already used, drawing symbols without replacement.
    """
    y = np.asarray(y, dtype=np.int64)
    single = y.ndim == 1
    Y = y[None, :] if single else y
    n = t.n
    if Y.shape[1] != n:
        raise InputError("output sequence length does not match the type blocklength")
    counts = np.array(t.counts)
    shape = tuple(counts + 1)
    if int(np.prod(shape)) * Y.shape[0] > STATE_CAP * 16 or int(np.prod(shape)) > STATE_CAP:
        raise SizeError(f"type class state space {shape} is above the exact-enumeration cap")
    J = len(counts)
    f = np.zeros((Y.shape[0],) + shape)
    f[(slice(None),) + (0,) * J] = 1.0
    grids = np.indices(shape)
    for i in range(n):
        g = np.zeros_like(f)
        for a in range(J):
            if counts[a] == 0:
                continue
            src = [slice(None)] * (J + 1)
            dst = [slice(None)] * (J + 1)
            src[a + 1] = slice(0, counts[a])
            dst[a + 1] = slice(1, counts[a] + 1)
            remaining = (counts[a] - grids[a][tuple(src[1:])]) / (n - i)
            w = dmc.transition[a, Y[:, i]]
            g[tuple(dst)] += f[tuple(src)] * remaining[None] * w.reshape((-1,) + (1,) * J)
        f = g
    out = f[(slice(None),) + tuple(counts)]
    return float(out[0]) if single else out


def log_multinomial(counts):
    counts = np.asarray(counts)
    return float(gammaln(counts.sum() + 1) - gammaln(counts + 1).sum())


def binary_joint_terms(counts, dmc):
    """Joint-type decomposition for a two-input, two-output channel.

    For an input composition (k0, k1) and an output sequence with m ones,
    the members of the type class split by k = #positions with x=1, y=1.
    Returns arrays indexed [m, k]: the log of the share of the type class
    times W^n for that joint type (so logsumexp over k is log Q^cc), and the
    joint counts N00, N01, N10, N11. Invalid cells carry -inf.
    """
    if dmc.J != 2 or dmc.K != 2:
        raise InputError("binary joint terms need a 2x2 channel")
    k0, k1 = int(counts[0]), int(counts[1])
    n = k0 + k1
    m = np.arange(n + 1)[:, None]
    k = np.arange(k1 + 1)[None, :]
    N11 = np.broadcast_to(k, (n + 1, k1 + 1))
    N10 = k1 - N11
    N01 = m - N11
    N00 = k0 - N01
    valid = (N01 >= 0) & (N00 >= 0)
    N01c = np.where(valid, N01, 0)
    N00c = np.where(valid, N00, 0)
    with np.errstate(divide="ignore"):
        logW = np.log(dmc.transition)
    ways = (gammaln(m + 1) + gammaln(n - m + 1) - gammaln(N11 + 1) - gammaln(N10 + 1)
            - gammaln(N01c + 1) - gammaln(N00c + 1))
    share = ways - (gammaln(n + 1) - gammaln(k0 + 1) - gammaln(k1 + 1))
    with np.errstate(invalid="ignore"):
        prob = (_xlogw(N00c, logW[0, 0]) + _xlogw(N01c, logW[0, 1])
                + _xlogw(N10, logW[1, 0]) + _xlogw(N11, logW[1, 1]))
    logw = np.where(valid, share + prob, -np.inf)
    return logw, (N00c, N01c, N10, N11), valid


def _xlogw(N, lw):
    if np.isinf(lw):
        return np.where(N > 0, -np.inf, 0.0)
    return N * lw


def cc_log_prob_by_output_count(counts, dmc):
    """log Q^cc(y) as a function of the number of ones in y (2x2 channels)."""
    logw, _, _ = binary_joint_terms(counts, dmc)
    return logsumexp(logw, axis=1)


@dataclass(frozen=True)
class QRatioReport:
    ns: tuple
    min_log_ratio: tuple
    thresholds: tuple
    kappa_hat: float
    kappa_cap: float
    holds: bool
    types: tuple = field(default=())


def min_log_ratio(t, dmc, q_star):
    """min over y of log Q*(y) - log Q^cc_t(y), exhaustive over output types.

    Both laws are invariant under permuting y, so one representative per
    output type covers every sequence.
    """
    q = np.asarray(q_star, dtype=float)
    reps = compositions(t.n, dmc.K)
    Y = np.array([np.repeat(np.arange(dmc.K), m) for m in reps], dtype=np.int64)
    with np.errstate(divide="ignore"):
        log_q = (reps * np.log(q)[None, :]).sum(axis=1)
        log_cc = np.log(cc_output_prob(t, dmc, Y))
    ok = np.isfinite(log_cc)
    return float(np.min(log_q[ok] - log_cc[ok]))


def check_q_ratio_bound(solution, dmc, ns=(8, 12, 16), kappa_cap=2.0):
    """Fit κ in log Q*(y)/Q^cc(y) >= -((s-1)/2) log n - κ over several n."""
    s = len(solution.support)
    mins, thr, types = [], [], []
    for n in ns:
        t = quantize_to_type(solution.p_star, n, solution.gamma, dmc.cost)
        types.append(t)
        mins.append(min_log_ratio(t, dmc, solution.q_star))
        thr.append(-0.5 * (s - 1) * math.log(n))
    deficits = [th - m for m, th in zip(mins, thr)]
    kappa = max(0.0, max(deficits))
    return QRatioReport(tuple(ns), tuple(mins), tuple(thr), float(kappa), kappa_cap,
                        bool(kappa <= kappa_cap), tuple(types))
