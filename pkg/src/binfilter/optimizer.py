"""Optimal coupling q*(x~ | x, y) between a prior and a posterior binary chain.

The backward pass builds the value functions E*_{k:n}(t_k) as CPL functions of
t_k = pi(x~_{k-1} = 0, x_k = 0). The forward pass fixes t_1 = f(x_1 = 0) and
re-solves each step at the realized t_k* to recover the conditional
probabilities q_k*.

Throughout, eliminating q01 and q11 through the two equality constraints
leaves an objective and a band constraint that depend on (q00, q10) only
through u = pi00*q00 + pi10*q10 = pi(x~_k = 0, x_k = 0).
"""

from __future__ import annotations

import csv
import io
import logging
import math
from dataclasses import dataclass, field
from typing import NamedTuple

from .chain import BinaryMarkovChain, fmt17, marginals
from .cpl import CplFunction, from_samples
from .lp2 import (
    InfeasibleSubproblem,
    TwoVarLpProblem,
    solve_interval_lp,
    solve_two_var_lp,
)

log = logging.getLogger(__name__)

ZERO_PI = 1e-14
BOUND_TOL = 1e-12
CLAMP_EPS = 1e-9
ROOT_TOL = 1e-14


class TBounds(NamedTuple):
    t_min: float
    t_max: float

    @property
    def width(self) -> float:
        return self.t_max - self.t_min

    def clamp(self, t: float) -> float:
        return min(max(t, self.t_min), self.t_max)


class PiTable(NamedTuple):
    """Joint law of (x~_{k-1}, x_k); entry ``pij`` is P(x~_{k-1}=i, x_k=j)."""

    p00: float
    p01: float
    p10: float
    p11: float


class QFactor(NamedTuple):
    """P(x~_k = 0 | x~_{k-1} = i, x_k = j) as q00, q01, q10, q11."""

    q00: float
    q01: float
    q10: float
    q11: float


class FirstQFactor(NamedTuple):
    """P(x~_1 = 0 | x_1 = i) for i = 0, 1."""

    q0: float
    q1: float


IDENTITY_Q = QFactor(1.0, 0.0, 1.0, 0.0)


def t_bounds(prior_marg0_k: float, post_marg0_km1: float) -> TBounds:
    m, g = prior_marg0_k, post_marg0_km1
    return TBounds(max(0.0, m + g - 1.0), min(m, g))


def pi_from_t(t: float, prior_marg0_k: float, post_marg0_km1: float) -> PiTable:
    m, g = prior_marg0_k, post_marg0_km1
    tb = t_bounds(m, g)
    if t < tb.t_min - BOUND_TOL or t > tb.t_max + BOUND_TOL:
        raise ValueError(f"t={t!r} outside [{tb.t_min!r}, {tb.t_max!r}]")
    entries = (t, g - t, m - t, 1.0 - m - g + t)
    return PiTable(*(e if e > 0.0 else 0.0 for e in entries))


def first_pi(t1: float) -> PiTable:
    """Pseudo pair table for step 1, with x~_0 fixed at 0: (t1, 1 - t1, 0, 0)."""
    return PiTable(t1, 1.0 - t1, 0.0, 0.0)


def t_next(q: QFactor, rho0g0: float, rho0g1: float, pi: PiTable) -> float:
    """t_{k+1} = pi(x~_k = 0, x_{k+1} = 0) implied by t_k (through pi) and q_k."""
    return (
        pi.p00 * q.q00 * rho0g0
        + pi.p01 * q.q01 * rho0g1
        + pi.p10 * q.q10 * rho0g0
        + pi.p11 * q.q11 * rho0g1
    )


def t_next_first(t1: float, q: FirstQFactor, rho0g0: float, rho0g1: float) -> float:
    return t1 * q.q0 * rho0g0 + (1.0 - t1) * q.q1 * rho0g1


def expected_same(pi: PiTable, q: QFactor) -> float:
    """E[1(x_k = x~_k)] under pair law ``pi`` and factor ``q``."""
    return pi.p00 * q.q00 + pi.p01 * (1.0 - q.q01) + pi.p10 * q.q10 + pi.p11 * (1.0 - q.q11)


@dataclass(frozen=True)
class TransitionRule:
    """Factorized coupling q(x~ | x, y) = q_1 * prod_k q_k."""

    first: FirstQFactor
    steps: tuple[QFactor, ...]
    t_star: tuple[float, ...]
    value: float | None = None
    value_functions: dict = field(default_factory=dict, compare=False, repr=False)
    diagnostics: dict = field(default_factory=dict, compare=False, repr=False)

    @property
    def n(self) -> int:
        return len(self.steps) + 1

    @classmethod
    def identity(cls, n: int) -> "TransitionRule":
        return cls(FirstQFactor(1.0, 0.0), (IDENTITY_Q,) * (n - 1), ())

    def is_identity(self, tol: float = 0.0) -> bool:
        vals = [self.first.q0 - 1.0, self.first.q1]
        for q in self.steps:
            vals += [q.q00 - 1.0, q.q01, q.q10 - 1.0, q.q11]
        return all(abs(v) <= tol for v in vals)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["k", "q00", "q01", "q10", "q11"])
        w.writerow([1, fmt17(self.first.q0), fmt17(self.first.q1), "", ""])
        for k, q in enumerate(self.steps, start=2):
            w.writerow([k, *(fmt17(v) for v in q)])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "TransitionRule":
        rows = list(csv.reader(io.StringIO(text)))[1:]
        first = FirstQFactor(float(rows[0][1]), float(rows[0][2]))
        steps = tuple(QFactor(*(float(v) for v in r[1:5])) for r in rows[1:])
        return cls(first, steps, ())


class StepData(NamedTuple):
    """Chain quantities entering the program at step k (1-based)."""

    k: int
    m: float  # f(x_k = 0)
    g_prev: float  # f(x_{k-1} = 0 | y)
    g: float  # f(x_k = 0 | y)
    f00: float  # f(x_{k-1} = 0, x_k = 0 | y)
    f10: float  # f(x_{k-1} = 1, x_k = 0 | y)
    rho00: float | None  # f(x_{k+1} = 0 | x_k = 0); None at k = n
    rho01: float | None
    bounds: TBounds


def step_data(prior: BinaryMarkovChain, post: BinaryMarkovChain) -> list[StepData]:
    """Per-step inputs, index 0 describing k = 1 (bounds collapse to t_1)."""
    n = prior.n
    m = marginals(prior)
    g = marginals(post)
    out = []
    for k in range(1, n + 1):
        rho = prior.rho(k + 1) if k < n else (None, None)
        if k == 1:
            t1 = float(m[0])
            out.append(StepData(1, t1, 1.0, float(g[0]), t1, 0.0, *rho, TBounds(t1, t1)))
            continue
        a, b = post.rho(k)
        gp = float(g[k - 2])
        out.append(
            StepData(
                k,
                float(m[k - 1]),
                gp,
                float(g[k - 1]),
                gp * a,
                (1.0 - gp) * b,
                *rho,
                t_bounds(float(m[k - 1]), gp),
            )
        )
    return out


def _box(f: float, pi_same: float, pi_other: float) -> tuple[float, float]:
    """Feasible range of q^{i0} given pi^{i0} = pi_same, pi^{i1} = pi_other."""
    if pi_same <= ZERO_PI:
        return 0.0, 1.0
    lo = (f - pi_other) / pi_same
    hi = f / pi_same
    return (lo if lo > 0.0 else 0.0), (hi if hi < 1.0 else 1.0)


def build_lp(s: StepData, pi: PiTable, a: float, b: float, lo: float, hi: float) -> TwoVarLpProblem:
    """Subproblem for one linear piece a + b*t_{k+1} of E*_{k+1:n} on [lo, hi]."""
    d = s.rho00 - s.rho01
    beta = 2.0 + b * d
    p00 = pi.p00 if pi.p00 > ZERO_PI else 0.0
    p10 = pi.p10 if pi.p10 > ZERO_PI else 0.0
    return TwoVarLpProblem(
        c00=beta * p00,
        c10=beta * p10,
        const=(1.0 - s.m) - s.g + a + b * s.rho01 * s.g,
        box00=_box(s.f00, pi.p00, pi.p01),
        box10=_box(s.f10, pi.p10, pi.p11),
        w00=d * p00,
        w10=d * p10,
        wconst=s.rho01 * s.g,
        band_lo=lo,
        band_hi=hi,
    )


def complete_q(s: StepData, pi: PiTable, q00: float, q10: float) -> QFactor:
    """Recover q01, q11 from the equality constraints."""
    if pi.p00 <= ZERO_PI:
        q00 = 1.0
    if pi.p10 <= ZERO_PI:
        q10 = 1.0
    q01 = (s.f00 - pi.p00 * q00) / pi.p01 if pi.p01 > ZERO_PI else 0.0
    q11 = (s.f10 - pi.p10 * q10) / pi.p11 if pi.p11 > ZERO_PI else 0.0
    return QFactor(_unit(q00), _unit(q01), _unit(q10), _unit(q11))


def _unit(x: float) -> float:
    return 0.0 if x < 0.0 else (1.0 if x > 1.0 else x)


# -- final step ---------------------------------------------------------------


def final_value(s: StepData, t: float) -> float:
    u = min(t, s.f00) + min(s.m - t, s.f10)
    return 2.0 * u + (1.0 - s.m) - s.g


def final_q(s: StepData, t: float) -> QFactor:
    pi = pi_from_t(s.bounds.clamp(t), s.m, s.g_prev)
    q00 = min(1.0, s.f00 / pi.p00) if pi.p00 > ZERO_PI else 1.0
    q10 = min(1.0, s.f10 / pi.p10) if pi.p10 > ZERO_PI else 1.0
    return complete_q(s, pi, q00, q10)


def solve_final_step(s: StepData) -> CplFunction:
    """E*_n(t_n) on [t_n^min, t_n^max]; at most three pieces, slopes in {-2, 0, 2}."""
    tb = s.bounds
    if tb.width <= ROOT_TOL:
        return CplFunction.point(tb.t_min, final_value(s, tb.t_min))
    ts = [tb.t_min, tb.t_max]
    for c in (s.f00, s.m - s.f10):
        if tb.t_min < c < tb.t_max:
            ts.append(c)
    ts.sort()
    return from_samples(ts, [final_value(s, t) for t in ts])


# -- intermediate steps -------------------------------------------------------


class StepSolution(NamedTuple):
    value: float
    q: QFactor
    piece: int
    edge_tie: bool


def bands(e_next: CplFunction):
    """Pieces of E*_{k+1:n} as (lo, hi, a, b) with the outermost ends opened.

    Every feasible q gives t_{k+1} inside the domain of E*_{k+1:n}, so the
    outer ends only ever cut off rounding noise. Interior ends are shared by
    neighbouring pieces and need no slack.
    """
    pieces = list(e_next.pieces())
    last = len(pieces) - 1
    for j, (lo, hi, a, b) in enumerate(pieces):
        yield (-math.inf if j == 0 else lo), (math.inf if j == last else hi), a, b


def _solve_piece(s: StepData, pi: PiTable, lo: float, hi: float, a: float, b: float):
    return solve_two_var_lp(build_lp(s, pi, a, b, lo, hi), band_tol=0.0)


def piece_values(s: StepData, t: float, e_next: CplFunction) -> list[float | None]:
    """Value of every subproblem j at t (None where infeasible)."""
    pi = pi_from_t(s.bounds.clamp(t), s.m, s.g_prev)
    out = []
    for lo, hi, a, b in bands(e_next):
        try:
            out.append(_solve_piece(s, pi, lo, hi, a, b).value)
        except InfeasibleSubproblem:
            out.append(None)
    return out


def solve_at(s: StepData, t: float, e_next: CplFunction) -> StepSolution:
    """Solve the piecewise-linear program of step k at a single t."""
    t = s.bounds.clamp(t)
    pi = pi_from_t(t, s.m, s.g_prev)
    best = None
    for j, (lo, hi, a, b) in enumerate(bands(e_next), start=1):
        try:
            sol = _solve_piece(s, pi, lo, hi, a, b)
        except InfeasibleSubproblem:
            continue
        key = (sol.value, sol.q00, sol.q10)
        if best is None or sol.value > best[0][0] + 1e-12 * max(1.0, abs(best[0][0])):
            best = (key, j, sol)
        elif sol.value >= best[0][0] - 1e-12 * max(1.0, abs(best[0][0])) and key[1:] > best[0][1:]:
            best = (key, j, sol)
    if best is None:
        raise InfeasibleSubproblem(f"inconsistent chains: no feasible subproblem at k={s.k}, t={t!r}")
    _, j, sol = best
    return StepSolution(sol.value, complete_q(s, pi, sol.q00, sol.q10), j, sol.edge_tie)


def _branch_points(s: StepData) -> list[float]:
    tb = s.bounds
    pts = {tb.t_min, tb.t_max}
    # pi00 = f00, pi10 = f10, pi01 = f00, pi11 = f10
    for c in (s.f00, s.m - s.f10, s.g_prev - s.f00, s.f10 - 1.0 + s.m + s.g_prev):
        if tb.t_min < c < tb.t_max:
            pts.add(c)
    return sorted(pts)


def _corner_masses(s: StepData, t: float) -> tuple[float, float, float, float]:
    """pi00*q00 and pi10*q10 at the upper and lower box bounds."""
    hi00 = min(t, s.f00)
    lo00 = max(0.0, s.f00 - (s.g_prev - t))
    hi10 = min(s.m - t, s.f10)
    lo10 = max(0.0, s.f10 - (1.0 - s.m - s.g_prev + t))
    return hi00, lo00, hi10, lo10


def candidate_breakpoints(s: StepData, e_next: CplFunction) -> list[float]:
    """Superset of the breakpoints of E*_{k:n}.

    Contains the domain ends, the points where a box-corner formula switches
    branch, and the points where a box corner crosses a band line
    t_{k+1} = breakpoint of E*_{k+1:n}.
    """
    base = _branch_points(s)
    pts = set(base)
    d = s.rho00 - s.rho01
    if abs(d) > ROOT_TOL:
        levels = [(tau - s.rho01 * s.g) / d for tau in e_next.breakpoints]
        corners = []
        for t in base:
            h00, l00, h10, l10 = _corner_masses(s, t)
            corners.append((h00 + h10, l00 + l10, h00 + l10, l00 + h10))
        for i in range(len(base) - 1):
            t0, t1 = base[i], base[i + 1]
            for c in range(4):
                v0, v1 = corners[i][c], corners[i + 1][c]
                if v0 == v1:
                    continue
                for u in levels:
                    if (v0 - u) * (v1 - u) < 0.0:
                        pts.add(t0 + (u - v0) * (t1 - t0) / (v1 - v0))
    return _dedup(sorted(pts))


def _dedup(ts: list[float]) -> list[float]:
    out = [ts[0]]
    for t in ts[1:]:
        if t - out[-1] > BOUND_TOL:
            out.append(t)
    if out[-1] != ts[-1]:
        out[-1] = ts[-1]
    return out


def _envelope(t0: float, t1: float, r0: list, r1: list) -> list[tuple[float, float]]:
    """Interior kinks of the upper envelope of per-subproblem lines on [t0, t1]."""
    lines = [(a, b - a) for a, b in zip(r0, r1) if a is not None and b is not None]
    if len(lines) < 2:
        return []
    # start from the line that is maximal at t0, preferring the steeper one
    cur = max(lines, key=lambda ln: (ln[0], ln[1]))
    lam = 0.0
    out = []
    while True:
        nxt = None
        for a, sl in lines:
            if sl <= cur[1]:
                continue
            x = (a - cur[0]) / (cur[1] - sl)
            if lam < x < 1.0 and (nxt is None or x < nxt[0] or (x == nxt[0] and sl > nxt[1][1])):
                nxt = (x, (a, sl))
        if nxt is None:
            return out
        lam, cur = nxt
        if lam > 1e-12 and lam < 1.0 - 1e-12:
            out.append((t0 + lam * (t1 - t0), cur[0] + lam * cur[1]))


def solve_intermediate_step(s: StepData, e_next: CplFunction) -> CplFunction:
    """E*_{k:n}(t_k) for 2 <= k <= n-1 given E*_{k+1:n}."""
    tb = s.bounds
    if tb.width <= ROOT_TOL:
        return CplFunction.point(tb.t_min, solve_at(s, tb.t_min, e_next).value)
    cands = candidate_breakpoints(s, e_next)
    rows = [piece_values(s, t, e_next) for t in cands]
    ts, vs = [], []
    for t, row in zip(cands, rows):
        feas = [v for v in row if v is not None]
        if not feas:
            raise InfeasibleSubproblem(f"inconsistent chains: no feasible subproblem at k={s.k}, t={t!r}")
        ts.append(t)
        vs.append(max(feas))
    for i in range(len(cands) - 1):
        for t, v in _envelope(cands[i], cands[i + 1], rows[i], rows[i + 1]):
            ts.append(t)
            vs.append(v)
    return from_samples(ts, vs)


# -- first step ---------------------------------------------------------------


def solve_first_step(e2: CplFunction, s: StepData) -> tuple[float, FirstQFactor]:
    """E*_{1:n}(t_1) and q_1* at the fixed t_1 = f(x_1 = 0)."""
    t1, g1 = s.m, s.g
    d = s.rho00 - s.rho01
    # eliminate q_1^1 = (g1 - t1*q_1^0)/(1 - t1); the program is 1-D in q_1^0
    lo = max(0.0, (g1 - (1.0 - t1)) / t1)
    hi = min(1.0, g1 / t1)
    best = None
    for blo, bhi, a, b in bands(e2):
        beta0 = t1 * (1.0 + b * s.rho00)
        beta1 = (1.0 - t1) * (b * s.rho01 - 1.0)
        alpha = 1.0 - t1 + a
        slope = beta0 - beta1 * t1 / (1.0 - t1)
        const = alpha + beta1 * g1 / (1.0 - t1)
        x_lo, x_hi = lo, hi
        # band: t1*d*q0 + g1*rho01 in [blo, bhi]
        w = t1 * d
        if abs(w) > ROOT_TOL:
            e0 = (blo - g1 * s.rho01) / w
            e1 = (bhi - g1 * s.rho01) / w
            if w < 0.0:
                e0, e1 = e1, e0
            x_lo, x_hi = max(x_lo, e0), min(x_hi, e1)
        elif not blo <= g1 * s.rho01 <= bhi:
            continue
        if x_lo > x_hi and (x_lo, x_hi) != (lo, hi):
            # the band misses the box; a neighbouring piece covers this t_2
            continue
        try:
            x, v = solve_interval_lp(slope, const, x_lo, x_hi)
        except InfeasibleSubproblem:
            continue
        tol = 1e-12 * max(1.0, abs(v))
        if best is None or v > best[0] + tol or (v >= best[0] - tol and x > best[1]):
            best = (v, x)
    if best is None:
        raise InfeasibleSubproblem("inconsistent chains: no feasible subproblem at k=1")
    v, q0 = best
    q0 = _unit(q0)
    q1 = _unit((g1 - t1 * q0) / (1.0 - t1))
    return v, FirstQFactor(q0, q1)


# -- full construction --------------------------------------------------------


def build_optimal_q(
    prior: BinaryMarkovChain, posterior: BinaryMarkovChain, keep_value_functions: bool = True
) -> TransitionRule:
    """Optimal factorized coupling of ``prior`` onto ``posterior``.

    Inputs are clamped to [1e-9, 1 - 1e-9] so that every conditional is
    defined. The returned rule carries the optimum E*_{1:n}(t_1) in ``value``.
    """
    if prior.n != posterior.n:
        raise ValueError("chains differ in length")
    if prior.n < 2:
        raise ValueError("chain length must be at least 2")
    prior = prior.clamped(CLAMP_EPS)
    posterior = posterior.clamped(CLAMP_EPS)
    steps = step_data(prior, posterior)
    n = prior.n

    funcs: dict[int, CplFunction] = {n: solve_final_step(steps[n - 1])}
    for k in range(n - 1, 1, -1):
        funcs[k] = solve_intermediate_step(steps[k - 1], funcs[k + 1])
    value, q1 = solve_first_step(funcs[2], steps[0])

    s1 = steps[0]
    t = t_next_first(s1.m, q1, s1.rho00, s1.rho01)
    t_star = [s1.m]
    qs = []
    agree = disagree = edge_ties = 0
    realized = s1.m * q1.q0 + (1.0 - s1.m) * (1.0 - q1.q1)
    for k in range(2, n + 1):
        s = steps[k - 1]
        t = s.bounds.clamp(t)
        if k < n:
            t = min(max(t, funcs[k].lo), funcs[k].hi)
        t_star.append(t)
        pi = pi_from_t(t, s.m, s.g_prev)
        if k == n:
            q = final_q(s, t)
        else:
            sol = solve_at(s, t, funcs[k + 1])
            q = sol.q
            edge_ties += sol.edge_tie
            up = final_q(s, t)
            if abs(up.q00 - q.q00) <= 1e-9 and abs(up.q10 - q.q10) <= 1e-9:
                agree += 1
            else:
                disagree += 1
        realized += expected_same(pi, q)
        qs.append(q)
        if k < n:
            t = t_next(q, s.rho00, s.rho01, pi)

    pieces = [f.n_pieces for f in funcs.values()]
    diag = {
        "realized_value": realized,
        "max_pieces": max(pieces),
        "mean_pieces": sum(pieces) / len(pieces),
        "upper_corner_agree": agree,
        "upper_corner_disagree": disagree,
        "edge_ties": edge_ties,
    }
    if abs(realized - value) > 1e-8:
        log.warning("forward pass value %.12g differs from backward optimum %.12g", realized, value)
    return TransitionRule(
        q1,
        tuple(qs),
        tuple(t_star),
        value,
        funcs if keep_value_functions else {},
        diag,
    )
