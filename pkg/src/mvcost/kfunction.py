"""The error floor K(r, V), the optimal second-order rate r*, and the
feedback bound L2(r, beta).

K(r, V) = min E[Phi(Pi)] over random variables with E[Pi] = r and
Var(Pi) <= V. Three point masses suffice, so every minimization here runs
over distributions with at most three atoms.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import quad, quad_vec
from scipy.optimize import linprog, minimize
from scipy.special import log_ndtr, logsumexp, ndtr, ndtri

from .errors import DegenerateError, InputError, NumericError

SQRT2 = math.sqrt(2.0)
N_RANDOM_STARTS = 32
START_SEED = 7919
BETA_MULTIPLIERS = (0.25, 0.5, 1.0, 2.0, 4.0, 8.0, 16.0)
QUAD_SPAN = 12.0
QUAD_EPS = 1e-10


def phi(x):
    return np.exp(-0.5 * np.square(x)) / math.sqrt(2 * math.pi)


@dataclass(frozen=True)
class ThreePointDist:
    """Up to three (probability, location) atoms."""

    probs: tuple
    locs: tuple

    def __post_init__(self):
        p = tuple(float(x) for x in self.probs)
        x = tuple(float(v) for v in self.locs)
        if len(p) != len(x) or not 1 <= len(p) <= 3:
            raise InputError("a three-point distribution needs 1 to 3 atoms")
        if any(v < 0 for v in p) or abs(sum(p) - 1) > 1e-9:
            raise InputError("atom probabilities must be nonnegative and sum to 1")
        object.__setattr__(self, "probs", p)
        object.__setattr__(self, "locs", x)

    @classmethod
    def point(cls, x):
        return cls((1.0,), (float(x),))

    @property
    def mean(self):
        return float(np.dot(self.probs, self.locs))

    @property
    def var(self):
        m = self.mean
        return float(np.dot(self.probs, (np.array(self.locs) - m) ** 2))

    def expect(self, f):
        return float(np.dot(self.probs, f(np.array(self.locs))))

    def to_dict(self):
        return {"probs": list(self.probs), "locs": list(self.locs)}

    @classmethod
    def from_dict(cls, d):
        return cls(tuple(d["probs"]), tuple(d["locs"]))


@dataclass(frozen=True)
class KResult:
    r: float
    v: float
    value: float
    minimizer: ThreePointDist
    oracle_gap: float | None = None
    alternatives: tuple = field(default=())

    def to_dict(self):
        return {"r": self.r, "v": self.v, "value": self.value,
                "minimizer": self.minimizer.to_dict(), "oracle_gap": self.oracle_gap,
                "alternatives": [a.to_dict() for a in self.alternatives]}

    @classmethod
    def from_dict(cls, d):
        return cls(float(d["r"]), float(d["v"]), float(d["value"]),
                   ThreePointDist.from_dict(d["minimizer"]), d.get("oracle_gap"),
                   tuple(ThreePointDist.from_dict(a) for a in d.get("alternatives", ())))


def _mills(x):
    """(1 - Phi(x)) / phi(x), stable for very negative x."""
    return math.exp(float(log_ndtr(-x)) + 0.5 * x * x + 0.5 * math.log(2 * math.pi))


def _search_box(r, v):
    near = 12.0 + 6.0 * math.sqrt(v)
    right = min(1e4, near + 3.0 * _mills(r))
    left = min(1e4, near + 3.0 * _mills(-r))
    return r - left, r + right, near


def _location_grid(r, v, box=None):
    lo, hi, near = _search_box(r, v)
    if box is not None:
        lo, hi = max(lo, box[0]), min(hi, box[1])
    core = np.linspace(max(lo, r - near), min(hi, r + near), 2401)
    parts = [core, [r]]
    if hi > r + near:
        parts.append(r + np.geomspace(near, hi - r, 240))
    if lo < r - near:
        parts.append(r - np.geomspace(near, r - lo, 240))
    return np.unique(np.concatenate(parts))


def _lp_start(fvals, grid, r, v):
    """Best distribution supported on a fixed grid: a linear program whose
    vertex solutions have at most three atoms."""
    d = grid - r
    res = linprog(fvals, A_ub=(d * d)[None, :], b_ub=[v], A_eq=np.vstack([np.ones_like(d), d]),
                  b_eq=[1.0, 0.0], bounds=(0, None), method="highs-ds")
    if not res.success:
        return None
    p = np.maximum(res.x, 0.0)
    idx = np.argsort(p)[::-1][:3]
    return grid[idx], p[idx] / p[idx].sum()


def _project(locs, probs, r, v):
    """Clean up an optimizer output into an exactly feasible distribution."""
    p = np.maximum(np.asarray(probs, dtype=float), 0.0)
    x = np.asarray(locs, dtype=float)
    keep = p > 1e-15
    p, x = p[keep], x[keep]
    p = p / p.sum()
    x = x + (r - np.dot(p, x))
    var = float(np.dot(p, (x - r) ** 2))
    if var > v:
        x = r + (x - r) * math.sqrt(v / var) if var > 0 else x
    order = np.argsort(x)
    x, p = x[order], p[order]
    merged_x, merged_p = [], []
    for xi, pi in zip(x, p):
        if merged_x and abs(xi - merged_x[-1]) < 1e-9 * (1.0 + abs(xi)):
            merged_p[-1] += pi
        else:
            merged_x.append(xi)
            merged_p.append(pi)
    p = np.array(merged_p)
    return np.array(merged_x), p / p.sum()


def _optimize(fun, grad, r, v, starts, box=None):
    """Minimize sum p_j f(pi_j) over <=3 atoms with mean r, variance <= v,
    by SLSQP from each start. Returns all projected local optima."""
    lo, hi, _ = _search_box(r, v)
    if box is not None:
        lo, hi = max(lo, box[0]), min(hi, box[1])
    bounds = [(lo, hi)] * 3 + [(0.0, 1.0)] * 3

    def obj(z):
        x, p = z[:3], z[3:]
        return float(np.dot(p, fun(x)))

    def obj_grad(z):
        x, p = z[:3], z[3:]
        return np.concatenate([p * grad(x), fun(x)])

    cons = [
        {"type": "eq", "fun": lambda z: np.array([z[3:].sum() - 1.0, np.dot(z[3:], z[:3] - r)]),
         "jac": lambda z: np.array([np.concatenate([np.zeros(3), np.ones(3)]),
                                    np.concatenate([z[3:], z[:3] - r])])},
        {"type": "ineq", "fun": lambda z: np.array([v - np.dot(z[3:], (z[:3] - r) ** 2)]),
         "jac": lambda z: np.concatenate([-2 * z[3:] * (z[:3] - r), -(z[:3] - r) ** 2])[None, :]},
    ]
    out = []
    for x0, p0 in starts:
        x0 = np.clip(np.resize(np.asarray(x0, dtype=float), 3), lo, hi)
        p0 = np.asarray(p0, dtype=float)
        p0 = np.concatenate([p0, np.zeros(3 - len(p0))]) if len(p0) < 3 else p0
        z0 = np.concatenate([x0, p0])
        try:
            with warnings.catch_warnings():
                # SLSQP clips its own overshoots; the notice is noise here
                warnings.simplefilter("ignore", RuntimeWarning)
                res = minimize(obj, z0, jac=obj_grad, method="SLSQP", bounds=bounds,
                               constraints=cons, options={"ftol": 1e-12, "maxiter": 200})
            z = res.x
        except (ValueError, np.linalg.LinAlgError):
            z = z0
        for cand in (z, z0):
            x, p = _project(cand[:3], cand[3:], r, v)
            if box is not None and (x.min() < box[0] or x.max() > box[1]):
                continue
            out.append((float(np.dot(p, fun(x))), x, p))
    return out


def _random_starts(r, v, rng, count):
    scale = 2.0 * max(math.sqrt(v), 0.5)
    starts = []
    for _ in range(count):
        x = r + scale * rng.standard_normal(3)
        p = rng.dirichlet(np.ones(3))
        starts.append(_project(x, p, r, v))
    return starts


def _distinct(cands, best, tol=1e-9):
    seen, alts = [], []
    for val, x, p in sorted(cands, key=lambda c: c[0]):
        if val > best + tol:
            break
        key = tuple(np.round(np.concatenate([x, p]), 4))
        if key not in seen:
            seen.append(key)
            alts.append(ThreePointDist(tuple(p), tuple(x)))
    return alts


def minimize_moment_problem(fun, grad, r, v, n_starts=N_RANDOM_STARTS, seed=START_SEED,
                            grid_fun=None, box=None, extra_starts=()):
    """min E f(Pi) over Pi with at most three atoms, E Pi = r, Var Pi <= v.

    Starts: the point mass at r, the symmetric pair r +- sqrt(v), the best
    distribution on a fixed location grid (a small linear program), and
    n_starts seeded random draws, plus any extra_starts given as
    ThreePointDist. An optional box (lo, hi) restricts the atom locations.
    Returns (value, ThreePointDist, alternatives).
    """
    r, v = float(r), float(v)
    if box is not None and not box[0] < r < box[1]:
        raise InputError(f"location box {box} does not contain the mean {r}")
    base = float(fun(np.array([r]))[0])
    if v <= 0:
        return base, ThreePointDist.point(r), ()
    sv = math.sqrt(v)
    starts = [(np.array([r, r, r]), np.array([1.0, 0.0, 0.0])),
              (np.array([r - sv, r + sv, r]), np.array([0.5, 0.5, 0.0]))]
    grid = _location_grid(r, v, box)
    gvals = grid_fun(grid) if grid_fun is not None else fun(grid)
    lp = _lp_start(gvals, grid, r, v)
    if lp is not None:
        starts.append(lp)
    starts += _random_starts(r, v, np.random.default_rng(seed), n_starts)
    starts += [_project(d.locs, d.probs, r, v) for d in extra_starts]
    cands = _optimize(fun, grad, r, v, starts, box)
    cands.append((base, np.array([r]), np.array([1.0])))
    best_val, bx, bp = min(cands, key=lambda c: c[0])
    alts = _distinct(cands, best_val)
    return best_val, ThreePointDist(tuple(bp), tuple(bx)), tuple(alts[1:])


def _phi_grad(x):
    return phi(x)


def k_value(r, v, n_starts=N_RANDOM_STARTS, seed=START_SEED, box=None):
    """K(r, v) and a minimizing distribution (atoms inside box if given)."""
    if v < 0:
        raise InputError("variance budget must be nonnegative")
    val, dist, alts = minimize_moment_problem(ndtr, _phi_grad, r, v, n_starts, seed, box=box)
    return KResult(float(r), float(v), val, dist, None, alts)


def default_oracle_grid(r, v):
    """[-8, 8] widened to r +- 4 sqrt(v + 1), and on the right far enough
    for the lone high atom that pays off when Phi(r) is small."""
    half = 4.0 * math.sqrt(v + 1.0)
    far = r + 4.0 * _mills(r) + 2.0 * math.sqrt(v) if v > 0 else r
    return (min(-8.0, r - half), max(8.0, r + half, min(far, r + 1e3)), 0.01)


def k_oracle_grid(r, v, grid_spec=None, refine=10):
    """Independent upper bound on K(r, v) by brute force on a location grid.

    Every two-point distribution on the grid (mass fixed by the mean,
    filtered by the variance) is scored, then a third atom anywhere on the
    grid is tried with the first two moved within +-refine steps of the best
    pair; for three fixed atoms the optimal masses sit at an end of a
    one-parameter interval.
    """
    lo, hi, step = grid_spec or default_oracle_grid(r, v)
    grid = np.arange(lo, hi + 0.5 * step, step)
    grid = np.unique(np.append(grid, r))
    xs = grid[grid <= r]
    ys = grid[grid >= r]
    Fx, Fy = ndtr(xs), ndtr(ys)
    best, best_pair = float(ndtr(r)), (r, r)
    for i0 in range(0, len(xs), 256):
        x = xs[i0:i0 + 256, None]
        dy = ys[None, :] - r
        dx = r - x
        var = dy * dx
        width = dy + dx
        with np.errstate(invalid="ignore", divide="ignore"):
            px = np.where(width > 0, dy / width, 1.0)
            val = px * Fx[i0:i0 + 256, None] + (1 - px) * Fy[None, :]
        val = np.where(var <= v, val, np.inf)
        k = np.unravel_index(np.argmin(val), val.shape)
        if val[k] < best:
            best, best_pair = float(val[k]), (float(x[k[0], 0]), float(ys[k[1]]))
    if v > 0 and refine > 0:
        val3 = _three_point_refine(grid, r, v, best_pair, refine, step)
        best = min(best, val3)
    return best


def _three_point_refine(grid, r, v, pair, refine, step):
    x0, y0 = pair
    offs = np.arange(-refine, refine + 1) * step
    a = (x0 + offs)[:, None, None] - r
    b = (y0 + offs)[None, :, None] - r
    c = grid[None, None, :] - r
    a, b, c = np.broadcast_arrays(a, b, c)
    ok = (a < 0) & (b > 0)
    den = np.where(ok, a - b, -1.0)
    # masses as affine functions of t = p3
    p1_0, p1_1 = -b / den, (b - c) / den
    p2_0, p2_1 = 1 - p1_0, -1 - p1_1
    lo = np.zeros_like(a)
    hi = np.ones_like(a)
    for u, w in ((p1_0, p1_1), (p2_0, p2_1)):
        with np.errstate(divide="ignore", invalid="ignore"):
            bound = -u / w
        lo = np.where(w > 0, np.maximum(lo, bound), lo)
        hi = np.where(w < 0, np.minimum(hi, bound), hi)
        lo = np.where((w == 0) & (u < 0), np.inf, lo)
    s0 = p1_0 * a * a + p2_0 * b * b
    s1 = p1_1 * a * a + p2_1 * b * b + c * c
    with np.errstate(divide="ignore", invalid="ignore"):
        tv = (v - s0) / s1
    hi = np.where(s1 > 0, np.minimum(hi, tv), hi)
    lo = np.where(s1 < 0, np.maximum(lo, tv), lo)
    lo = np.where((s1 == 0) & (s0 > v), np.inf, lo)
    feas = ok & (lo <= hi)
    Fa, Fb, Fc = ndtr(a + r), ndtr(b + r), ndtr(c + r)
    f0 = p1_0 * Fa + p2_0 * Fb
    f1 = p1_1 * Fa + p2_1 * Fb + Fc
    t = np.where(f1 > 0, lo, hi)
    vals = np.where(feas, f0 + t * f1, np.inf)
    return float(vals.min())


def k_large_v_decay(r, m):
    """Two-point construction with mean r whose value tends to 0 in m."""
    if m < 3:
        raise InputError("m must be at least 3")
    p = 1.0 - 1.0 / m
    x1 = -math.sqrt(math.log(m))
    x2 = (r - p * x1) / (1 - p)
    return float(p * ndtr(x1) + (1 - p) * ndtr(x2))


def _scaled(solution, disp, v):
    vg = disp.v_gamma
    if vg <= 0:
        raise InputError("dispersion V(Γ) must be positive")
    if v < 0:
        raise InputError("variance budget must be nonnegative")
    return math.sqrt(vg), solution.c_prime ** 2 * v / vg


def error_floor(r, solution, disp, v):
    sv, vp = _scaled(solution, disp, v)
    return k_value(r / sv, vp).value


@dataclass(frozen=True)
class SocrResult:
    r_star: float
    k_at_r_star: float
    baseline_as: float
    bracket: tuple
    iterations: int

    def to_dict(self):
        return {"r_star": self.r_star, "k_at_r_star": self.k_at_r_star,
                "baseline_as": self.baseline_as, "bracket": list(self.bracket),
                "iterations": self.iterations}

    @classmethod
    def from_dict(cls, d):
        return cls(float(d["r_star"]), float(d["k_at_r_star"]), float(d["baseline_as"]),
                   tuple(d["bracket"]), int(d["iterations"]))


def socr(solution, disp, v, eps, rtol=1e-6):
    """Largest r with K(r/sqrt(V(Γ)), C'^2 v / V(Γ)) <= eps, by bisection."""
    if not 0 < eps < 1:
        raise InputError("eps must lie in (0, 1)")
    sv, vp = _scaled(solution, disp, v)
    baseline = sv * float(ndtri(eps))
    if vp == 0:
        return SocrResult(baseline, float(eps), baseline, (baseline, baseline), 0)
    e2 = 0.5 * (1 + eps)
    lo = sv * float(ndtri(eps / 2))
    hi = sv * (float(ndtri(e2)) + math.sqrt(2 * vp * e2 / (e2 - eps)))
    k_lo = k_value(lo / sv, vp).value
    k_hi = k_value(hi / sv, vp).value
    if not k_lo < eps < k_hi:
        raise NumericError(
            f"bracket [{lo:.6g}, {hi:.6g}] gives K = [{k_lo:.6g}, {k_hi:.6g}], not around {eps}")
    it = 0
    while hi - lo > rtol:
        mid = 0.5 * (lo + hi)
        if k_value(mid / sv, vp).value <= eps:
            lo = mid
        else:
            hi = mid
        it += 1
    r_star = 0.5 * (lo + hi)
    return SocrResult(r_star, k_value(r_star / sv, vp).value, baseline, (lo, hi), it)


def _gauss_phi_conv(a, T, b):
    """Integral over [a, T] of phi(x) phi(b - x) dx, in closed form."""
    return phi(b / SQRT2) / SQRT2 * (ndtr(SQRT2 * T - b / SQRT2) - ndtr(SQRT2 * a - b / SQRT2))


class _SwitchIntegral:
    """g(pi) = int_a^{a+12} phi(x) [Phi(sqrt2 pi - x) - Phi(pi/sqrt2 + c - x)] dx."""

    def __init__(self, a, c):
        self.a, self.c = a, c
        self.T = a + QUAD_SPAN
        self.max_err = 0.0

    def _integrand(self, x, p):
        return phi(x) * (ndtr(SQRT2 * p - x) - ndtr(p / SQRT2 + self.c - x))

    def value(self, locs):
        out = np.empty(len(locs))
        for i, p in enumerate(np.asarray(locs, dtype=float)):
            val, err = quad(self._integrand, self.a, self.T, args=(p,), epsabs=QUAD_EPS,
                            epsrel=0.0, limit=200)
            if not err <= 10 * QUAD_EPS:
                raise NumericError(f"quadrature error {err:.3g} above tolerance at pi={p:.6g}")
            self.max_err = max(self.max_err, err)
            out[i] = val
        return out

    def value_vec(self, locs):
        locs = np.asarray(locs, dtype=float)
        val, err = quad_vec(lambda x: self._integrand(x, locs), self.a, self.T,
                            epsabs=QUAD_EPS, epsrel=0.0, norm="max")
        self.max_err = max(self.max_err, float(err))
        return val

    def grad(self, locs):
        p = np.asarray(locs, dtype=float)
        return (SQRT2 * _gauss_phi_conv(self.a, self.T, SQRT2 * p)
                - _gauss_phi_conv(self.a, self.T, p / SQRT2 + self.c) / SQRT2)

    @property
    def tail(self):
        return float(ndtr(-self.T))


@dataclass(frozen=True)
class L2Result:
    r: float
    beta: float
    value: float
    minimizer: ThreePointDist
    k: float
    gap: float
    quad_error: float

    def to_dict(self):
        return {"r": self.r, "beta": self.beta, "l2": self.value,
                "minimizer": self.minimizer.to_dict(), "k": self.k, "gap": self.gap,
                "quad_error": self.quad_error}

    @classmethod
    def from_dict(cls, d):
        return cls(float(d["r"]), float(d["beta"]), float(d["l2"]),
                   ThreePointDist.from_dict(d["minimizer"]), float(d["k"]), float(d["gap"]),
                   float(d["quad_error"]))


def switch_integral(dist, r, beta, solution, disp):
    """The correction term of L2 for one distribution of the scaled rate."""
    sv = math.sqrt(disp.v_gamma)
    g = _SwitchIntegral(beta / sv, r / (SQRT2 * sv))
    return float(np.dot(dist.probs, g.value(dist.locs)))


def l2_bound(r, beta, solution, disp, v, k_result=None, n_starts=N_RANDOM_STARTS,
             extra_starts=()):
    """Feedback error bound L2(r, beta): the K problem with the switch
    integral subtracted from the objective."""
    if beta < 0:
        raise InputError("beta must be nonnegative")
    sv, vp = _scaled(solution, disp, v)
    rp = r / sv
    kres = k_result or k_value(rp, vp)
    g = _SwitchIntegral(beta / sv, r / (SQRT2 * sv))

    def fun(x):
        return ndtr(x) - g.value(x)

    def grad(x):
        return phi(x) - g.grad(x)

    def grid_fun(x):
        return ndtr(x) - g.value_vec(x)

    val, dist, _ = minimize_moment_problem(fun, grad, rp, vp, n_starts, grid_fun=grid_fun,
                                           extra_starts=extra_starts)
    # the K minimizer is feasible for the same problem
    at_k = kres.minimizer.expect(fun)
    if at_k < val:
        val, dist = at_k, kres.minimizer
    err = g.max_err * 3 + g.tail
    return L2Result(float(r), float(beta), float(val), dist, kres.value,
                    float(kres.value - val), float(err))


@dataclass(frozen=True)
class BetaResult:
    beta: float
    gap: float
    tol: float
    l2: float
    k: float
    scan: tuple

    def to_dict(self):
        return {"beta": self.beta, "gap": self.gap, "tol": self.tol, "l2": self.l2,
                "k": self.k, "scan": [s.to_dict() for s in self.scan]}

    @classmethod
    def from_dict(cls, d):
        return cls(float(d["beta"]), float(d["gap"]), float(d["tol"]), float(d["l2"]),
                   float(d["k"]), tuple(L2Result.from_dict(s) for s in d["scan"]))


def find_beta(r, solution, disp, v, multipliers=BETA_MULTIPLIERS, n_starts=N_RANDOM_STARTS):
    """Scan beta over multipliers * sqrt(V(Γ)) and keep the largest K - L2."""
    sv, vp = _scaled(solution, disp, v)
    kres = k_value(r / sv, vp)
    scan = tuple(l2_bound(r, m * sv, solution, disp, v, kres, n_starts) for m in multipliers)
    best = max(scan, key=lambda s: s.gap)
    tol = best.quad_error + 1e-9
    if not best.gap > tol:
        raise DegenerateError(
            f"no beta gives L2 below K beyond tolerance (best gap {best.gap:.3g}); "
            "the K minimizer is effectively degenerate")
    return BetaResult(best.beta, best.gap, tol, best.value, best.k, scan)


def feedback_rate_scan(r, beta, solution, disp, v, offsets):
    """Largest r + d (d from offsets, increasing) with L2(r + d, beta) < K at r."""
    sv, vp = _scaled(solution, disp, v)
    k_at_r = k_value(r / sv, vp).value
    best = None
    for d in offsets:
        res = l2_bound(r + d, beta, solution, disp, v)
        if res.value < k_at_r - res.quad_error:
            best = r + d
        else:
            break
    return best, k_at_r


def essential_sup_limit_check(dist, x_values):
    """(1/x) log E[Phi(X - x)] + x/2 for each x, evaluated in log domain."""
    xs = np.asarray(x_values, dtype=float)
    if np.any(xs <= 0) or np.any(np.diff(xs) <= 0):
        raise InputError("x values must be positive and increasing")
    logp = np.log(np.maximum(dist.probs, 1e-300))
    locs = np.array(dist.locs)
    terms = logp[None, :] + log_ndtr(locs[None, :] - xs[:, None])
    return logsumexp(terms, axis=1) / xs + xs / 2
