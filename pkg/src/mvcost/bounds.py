"""Error-probability curves against the second-order rate r.

Three curves share one grid: the achievable floor under the mean and
variance cost constraint, the almost-sure constraint baseline Phi(r/sqrt V),
and the feedback bound minimized over a beta grid.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy.special import ndtr

from .errors import InputError
from .kfunction import BETA_MULTIPLIERS, _scaled, k_value, l2_bound

CURVE_STARTS = 4


@dataclass(frozen=True)
class CurvePoint:
    r: float
    floor_gv: float
    baseline_as: float
    feedback_l2: float | None = None
    beta: float | None = None

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


def r_grid(r_min, r_max, step):
    if not (math.isfinite(r_min) and math.isfinite(r_max)) or r_max < r_min:
        raise InputError("r range must be finite with r_min <= r_max")
    if not step > 0:
        raise InputError("step must be positive")
    count = int(math.floor((r_max - r_min) / step + 1e-9)) + 1
    return [round(r_min + i * step, 12) for i in range(count)]


def emit_curve(solution, disp, v, r_min, r_max, step, feedback=True,
               multipliers=BETA_MULTIPLIERS, n_starts=CURVE_STARTS):
    """CurvePoints on r_min, r_min + step, ..., r_max.

    The feedback minimizations at each r start from the minimizers found at
    the previous r for the same beta, so the grid is walked in order.
    """
    if v < 0:
        raise InputError("variance budget must be nonnegative")
    sv, vp = _scaled(solution, disp, v)
    warm = {}
    out = []
    for r in r_grid(r_min, r_max, step):
        kres = k_value(r / sv, vp)
        fl, beta = None, None
        if feedback:
            for m in multipliers:
                b = m * sv
                prev = [d for d in (warm.get(m), kres.minimizer) if d is not None]
                res = l2_bound(r, b, solution, disp, v, kres, n_starts, extra_starts=prev)
                warm[m] = res.minimizer
                if fl is None or res.value < fl:
                    fl, beta = res.value, b
        out.append(CurvePoint(float(r), kres.value, float(ndtr(r / sv)), fl, beta))
    return out


def curve_violations(points, tol=1e-9):
    """Grid points breaking the ordering feedback <= floor <= baseline or
    monotonicity in r, as (index, reason) pairs."""
    bad = []
    for i, p in enumerate(points):
        if p.floor_gv > p.baseline_as + tol:
            bad.append((i, "floor above baseline"))
        if p.feedback_l2 is not None and p.feedback_l2 > p.floor_gv + tol:
            bad.append((i, "feedback above floor"))
        if i:
            q = points[i - 1]
            for name in ("floor_gv", "baseline_as", "feedback_l2"):
                a, b = getattr(q, name), getattr(p, name)
                if a is not None and b is not None and b < a - tol:
                    bad.append((i, f"{name} decreases"))
    return bad


def socr_crossing(points, eps):
    """First grid r where the floor exceeds eps, minus one step (None if never)."""
    rs = np.array([p.r for p in points])
    fl = np.array([p.floor_gv for p in points])
    above = np.flatnonzero(fl > eps)
    if not len(above) or above[0] == 0:
        return None
    return float(rs[above[0] - 1])
