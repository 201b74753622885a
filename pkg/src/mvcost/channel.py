"""Discrete memoryless channels with an input cost, n-types and
constant-composition sampling.

All logarithms are natural.
"""
from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import InfeasibleError, InputError

ROW_TOL = 1e-9
COST_TOL = 1e-12
EXACT_TYPES = 50_000


@dataclass(frozen=True, eq=False)
class Dmc:
    """A channel W(b|a) with per-input cost c(a)."""

    input_symbols: tuple
    output_symbols: tuple
    transition: np.ndarray
    cost: np.ndarray

    def __post_init__(self):
        W = np.array(self.transition, dtype=float)
        c = np.array(self.cost, dtype=float)
        if W.ndim != 2:
            raise InputError("transition must be a matrix")
        if W.shape != (len(self.input_symbols), len(self.output_symbols)):
            raise InputError(
                f"transition shape {W.shape} does not match alphabets "
                f"({len(self.input_symbols)}, {len(self.output_symbols)})")
        if c.shape != (W.shape[0],):
            raise InputError("cost must have one entry per input symbol")
        if not np.all(np.isfinite(W)) or np.any(W < 0) or np.any(W > 1):
            raise InputError("transition entries must lie in [0, 1]")
        dev = np.abs(W.sum(axis=1) - 1.0)
        if np.any(dev > ROW_TOL):
            bad = int(np.argmax(dev))
            raise InputError(f"row {bad} is not stochastic (sums to {W[bad].sum():.12g})")
        if not np.all(np.isfinite(c)) or np.any(c < 0):
            raise InputError("costs must be finite and nonnegative")
        if c.max() <= 0 or np.ptp(c) == 0:
            raise InputError("all costs are equal; the cost constraint is vacuous")
        W = W / W.sum(axis=1, keepdims=True)
        W.setflags(write=False)
        c.setflags(write=False)
        object.__setattr__(self, "transition", W)
        object.__setattr__(self, "cost", c)
        object.__setattr__(self, "input_symbols", tuple(self.input_symbols))
        object.__setattr__(self, "output_symbols", tuple(self.output_symbols))

    @property
    def J(self):
        return self.transition.shape[0]

    @property
    def K(self):
        return self.transition.shape[1]

    @property
    def gamma_0(self):
        return float(self.cost.min())

    @property
    def c_max(self):
        return float(self.cost.max())

    @cached_property
    def gamma_star(self):
        """Smallest cost at which the unconstrained capacity is reached."""
        from .capacity import saturation_cost
        return saturation_cost(self)

    def to_dict(self):
        return {
            "input_symbols": list(self.input_symbols),
            "output_symbols": list(self.output_symbols),
            "transition": self.transition.tolist(),
            "cost": self.cost.tolist(),
        }


def bsc(p, cost=(0.0, 1.0)):
    return Dmc((0, 1), (0, 1), np.array([[1 - p, p], [p, 1 - p]]), np.array(cost))


def validate_channel(raw):
    """Build a Dmc from a dict (or JSON text) with keys input_symbols,
    output_symbols, transition and cost.

    Also computes the saturation cost so that channels with Γ_0 = Γ* are
    rejected up front.
    """
    if isinstance(raw, (str, bytes)):
        try:
            raw = json.loads(raw)
        except json.JSONDecodeError as exc:
            raise InputError(f"channel file is not valid JSON: {exc}") from None
    if not isinstance(raw, dict):
        raise InputError("channel description must be a JSON object")
    missing = {"input_symbols", "output_symbols", "transition", "cost"} - set(raw)
    if missing:
        raise InputError(f"channel description is missing {sorted(missing)}")
    try:
        W = np.array(raw["transition"], dtype=float)
        c = np.array(raw["cost"], dtype=float)
    except (TypeError, ValueError):
        raise InputError("transition and cost must be numeric arrays") from None
    dmc = Dmc(tuple(raw["input_symbols"]), tuple(raw["output_symbols"]), W, c)
    if not dmc.gamma_star > dmc.gamma_0 + 1e-12:
        raise InputError("saturation cost equals the minimum cost; the constraint is vacuous")
    return dmc


def load_channel(path):
    with open(path) as fh:
        text = fh.read()
    return validate_channel(text)


def _check_dist(P, size):
    P = np.asarray(P, dtype=float)
    if P.shape != (size,) or np.any(P < -1e-15) or abs(P.sum() - 1) > 1e-9:
        raise InputError("not a probability vector over the input alphabet")
    return np.clip(P, 0.0, None)


def output_dist(P, dmc):
    return _check_dist(P, dmc.J) @ dmc.transition


def divergences(dmc, Q):
    """D(W(.|a) || Q) for every input a."""
    W = dmc.transition
    Q = np.asarray(Q, dtype=float)
    pos = W > 0
    if np.any(pos & (Q[None, :] <= 0)):
        raise InputError("W(b|a) > 0 where Q(b) = 0: information density undefined")
    ratio = np.where(pos, W / np.where(Q > 0, Q, 1.0)[None, :], 1.0)
    return np.sum(np.where(pos, W * np.log(ratio), 0.0), axis=1)


def mutual_information(P, dmc):
    P = _check_dist(P, dmc.J)
    Q = P @ dmc.transition
    D = divergences(dmc, Q)
    return float(np.dot(P, D))


def info_density(dmc, Q, a, b):
    w = dmc.transition[a, b]
    if w == 0:
        raise InputError(f"W({b}|{a}) = 0: pair never occurs")
    if Q[b] <= 0:
        raise InputError(f"Q({b}) = 0 while W({b}|{a}) > 0")
    return float(np.log(w / Q[b]))


def density_matrix(dmc, Q):
    """i(a,b) = log W(b|a)/Q(b), with 0 where W(b|a) = 0."""
    W = dmc.transition
    Q = np.asarray(Q, dtype=float)
    pos = W > 0
    if np.any(pos & (Q[None, :] <= 0)):
        raise InputError("W(b|a) > 0 where Q(b) = 0: information density undefined")
    return np.where(pos, np.log(np.where(pos, W, 1.0) / np.where(Q > 0, Q, 1.0)[None, :]), 0.0)


@dataclass(frozen=True)
class NType:
    """An n-type: nonnegative integer counts summing to n."""

    n: int
    counts: tuple

    def __post_init__(self):
        counts = tuple(int(k) for k in self.counts)
        if any(k < 0 for k in counts) or sum(counts) != self.n or self.n <= 0:
            raise InputError(f"counts {counts} do not form a {self.n}-type")
        object.__setattr__(self, "counts", counts)

    @property
    def dist(self):
        return np.array(self.counts, dtype=float) / self.n

    def cost(self, cost):
        return float(np.dot(self.counts, cost)) / self.n

    def support(self):
        return tuple(a for a, k in enumerate(self.counts) if k > 0)

    def l1(self, P):
        return float(np.abs(self.dist - np.asarray(P, dtype=float)).sum())


def compositions(n, J):
    """All J-part compositions of n, in lexicographic order, as an array."""
    rows = []
    for bars in itertools.combinations(range(n + J - 1), J - 1):
        edges = (-1,) + bars + (n + J - 1,)
        rows.append([edges[i + 1] - edges[i] - 1 for i in range(J)])
    return np.array(rows, dtype=np.int64)[::-1]


def _pick(cands, P, n, cost, gamma):
    feas = cands[cands @ cost <= n * gamma + n * COST_TOL]
    dist = np.abs(feas / n - P[None, :]).sum(axis=1)
    best = dist.min()
    tied = feas[dist <= best + 1e-12]
    order = np.lexsort(tied.T[::-1])
    return tied[order[0]]


def _greedy(P, n, cost, gamma):
    J = len(P)
    raw = n * P
    counts = np.floor(raw).astype(np.int64)
    rem = n - counts.sum()
    frac = raw - counts
    for a in sorted(range(J), key=lambda a: (-frac[a], a))[:rem]:
        counts[a] += 1
    cheapest = int(np.argmin(cost))
    while counts @ cost > n * gamma + n * COST_TOL:
        over = [a for a in range(J) if counts[a] > 0 and a != cheapest and cost[a] > cost[cheapest]]
        a = max(over, key=lambda a: (counts[a] > raw[a], cost[a], -a))
        counts[a] -= 1
        counts[cheapest] += 1

    def score(t):
        return np.abs(t / n - P).sum()

    improved = True
    while improved:
        improved = False
        cur = score(counts)
        for a in range(J):
            if counts[a] == 0:
                continue
            for b in range(J):
                if a == b:
                    continue
                t = counts.copy()
                t[a] -= 1
                t[b] += 1
                if t @ cost <= n * gamma + n * COST_TOL and score(t) < cur - 1e-15:
                    counts, cur, improved = t, score(t), True
    return counts


def quantize_to_type(P, n, gamma, cost):
    """The n-type closest to P in l1 among those with c(t) <= gamma.

    Exact whenever there are at most EXACT_TYPES n-types (ties go to the
    lexicographically smallest count vector); larger instances use
    largest-remainder rounding, a cost repair pass and pairwise local moves.
    """
    cost = np.asarray(cost, dtype=float)
    P = _check_dist(P, len(cost))
    n = int(n)
    if n <= 0:
        raise InputError("blocklength must be positive")
    if gamma < cost.min() - COST_TOL:
        raise InfeasibleError(f"no type has cost <= {gamma}: minimum cost is {cost.min()}")
    if math.comb(n + len(P) - 1, len(P) - 1) <= EXACT_TYPES:
        counts = _pick(compositions(n, len(P)), P, n, cost, gamma)
    else:
        counts = _greedy(P, n, cost, gamma)
    return NType(n, tuple(int(k) for k in counts))


def sample_constant_composition(t, rng):
    """A uniformly random sequence from the type class of t."""
    seq = np.repeat(np.arange(len(t.counts)), t.counts)
    return rng.permutation(seq)
