"""Two-variable linear programs by vertex enumeration.

The feasible region is a box in (q00, q10) cut by a band
``lo <= w00*q00 + w10*q10 + wconst <= hi``: a polygon with at most six
corners. The maximizer is found by enumerating corners.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

FEAS_TOL = 1e-10
TIE_TOL = 1e-12


class InfeasibleSubproblem(ValueError):
    pass


@dataclass(frozen=True)
class TwoVarLpProblem:
    c00: float
    c10: float
    const: float
    box00: tuple[float, float]
    box10: tuple[float, float]
    w00: float
    w10: float
    wconst: float
    band_lo: float
    band_hi: float


class LpSolution(NamedTuple):
    q00: float
    q10: float
    value: float
    edge_tie: bool


def solve_two_var_lp(p: TwoVarLpProblem, band_tol: float = FEAS_TOL) -> LpSolution:
    """Maximize ``c00*q00 + c10*q10 + const`` over the box-and-band polygon.

    Among optimal corners the lexicographically largest (q00, q10) is
    returned; ``edge_tie`` reports that a whole edge is optimal. Band ends
    may be infinite.
    """
    x0, x1 = p.box00
    y0, y1 = p.box10
    if x0 > x1 + FEAS_TOL or y0 > y1 + FEAS_TOL:
        raise InfeasibleSubproblem("infeasible subproblem: empty box")
    if x0 > x1:
        x0 = x1 = 0.5 * (x0 + x1)
    if y0 > y1:
        y0 = y1 = 0.5 * (y0 + y1)
    w00, w10, wc = p.w00, p.w10, p.wconst
    lo, hi = p.band_lo - band_tol, p.band_hi + band_tol

    cand = [(x0, y0), (x0, y1), (x1, y0), (x1, y1)]
    for level in (p.band_lo, p.band_hi):
        if not math.isfinite(level):
            continue
        r = level - wc
        if w10 != 0.0:
            for x in (x0, x1):
                y = (r - w00 * x) / w10
                if y0 - FEAS_TOL <= y <= y1 + FEAS_TOL:
                    cand.append((x, min(max(y, y0), y1)))
        if w00 != 0.0:
            for y in (y0, y1):
                x = (r - w10 * y) / w00
                if x0 - FEAS_TOL <= x <= x1 + FEAS_TOL:
                    cand.append((min(max(x, x0), x1), y))

    best = None
    scored = []
    c00, c10, const = p.c00, p.c10, p.const
    for x, y in cand:
        s = w00 * x + w10 * y + wc
        if lo <= s <= hi:
            v = c00 * x + c10 * y + const
            scored.append((v, x, y))
            if best is None or v > best:
                best = v
    if best is None:
        raise InfeasibleSubproblem("infeasible subproblem")

    tol = TIE_TOL * max(1.0, abs(best))
    ties = [(x, y) for v, x, y in scored if v >= best - tol]
    qx, qy = max(ties)
    edge = any(abs(x - qx) > TIE_TOL or abs(y - qy) > TIE_TOL for x, y in ties)
    return LpSolution(qx, qy, c00 * qx + c10 * qy + const, edge)


def solve_interval_lp(slope: float, const: float, lo: float, hi: float) -> tuple[float, float]:
    """Maximize ``slope*x + const`` on [lo, hi]; ties resolve to the larger x."""
    if lo > hi + FEAS_TOL:
        raise InfeasibleSubproblem("infeasible subproblem: empty interval")
    if lo > hi:
        lo = hi = 0.5 * (lo + hi)
    x = lo if slope < 0.0 else hi
    return x, slope * x + const
