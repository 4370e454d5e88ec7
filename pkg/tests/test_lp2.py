import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.optimize import linprog

from binfilter.lp2 import (
    InfeasibleSubproblem,
    TwoVarLpProblem,
    solve_interval_lp,
    solve_two_var_lp,
)


def problem(c00, c10, box00=(0.0, 1.0), box10=(0.0, 1.0), w=(0.0, 0.0, 0.0), band=(-1.0, 1.0), const=0.0):
    return TwoVarLpProblem(c00, c10, const, box00, box10, w[0], w[1], w[2], band[0], band[1])


def test_upper_corner_when_band_inactive():
    sol = solve_two_var_lp(problem(1.0, 2.0, (0.1, 0.7), (0.2, 0.9)))
    assert (sol.q00, sol.q10) == (0.7, 0.9)
    assert sol.value == pytest.approx(0.7 + 1.8)
    assert not sol.edge_tie


def test_lower_corner_for_negative_coefficients():
    sol = solve_two_var_lp(problem(-1.0, -0.5, (0.1, 0.7), (0.2, 0.9), const=3.0))
    assert (sol.q00, sol.q10) == (0.1, 0.2)
    assert sol.value == pytest.approx(3.0 - 0.1 - 0.1)


def test_band_cuts_the_box():
    # q00 + q10 <= 1 with objective q00 + 2 q10 -> (0, 1)
    sol = solve_two_var_lp(problem(1.0, 2.0, w=(1.0, 1.0, 0.0), band=(0.0, 1.0)))
    assert (sol.q00, sol.q10) == pytest.approx((0.0, 1.0))


def test_edge_tie_picks_largest_q00():
    # objective parallel to the binding band edge q00 + q10 = 1
    sol = solve_two_var_lp(problem(1.0, 1.0, w=(1.0, 1.0, 0.0), band=(0.0, 1.0)))
    assert sol.edge_tie
    assert (sol.q00, sol.q10) == pytest.approx((1.0, 0.0))
    assert sol.value == pytest.approx(1.0)


def test_infeasible():
    with pytest.raises(InfeasibleSubproblem, match="infeasible subproblem"):
        solve_two_var_lp(problem(1.0, 1.0, w=(1.0, 1.0, 0.0), band=(3.0, 4.0)))
    with pytest.raises(InfeasibleSubproblem):
        solve_two_var_lp(problem(1.0, 1.0, box00=(0.6, 0.5)))


@pytest.mark.parametrize("slope,expected", [(1.0, 0.8), (-1.0, 0.2), (0.0, 0.8)])
def test_interval_lp(slope, expected):
    x, v = solve_interval_lp(slope, 1.0, 0.2, 0.8)
    assert x == expected
    assert v == pytest.approx(slope * expected + 1.0)


@st.composite
def random_problems(draw):
    seed = draw(st.integers(0, 2**32 - 1))
    rng = np.random.default_rng(seed)
    a, b = np.sort(rng.uniform(0, 1, 2)), np.sort(rng.uniform(0, 1, 2))
    w = rng.normal(size=3)
    mid = w[0] * rng.uniform(*a) + w[1] * rng.uniform(*b) + w[2]
    width = rng.uniform(0.0, 0.5)
    lo = mid - rng.uniform(0, width)
    return TwoVarLpProblem(
        *rng.normal(size=3), tuple(a), tuple(b), *w, lo, lo + width
    )


@given(random_problems())
def test_matches_scipy_linprog(p):
    res = linprog(
        c=[-p.c00, -p.c10],
        A_ub=[[p.w00, p.w10], [-p.w00, -p.w10]],
        b_ub=[p.band_hi - p.wconst, p.wconst - p.band_lo],
        bounds=[p.box00, p.box10],
        method="highs",
    )
    assert res.status == 0
    sol = solve_two_var_lp(p)
    assert sol.value == pytest.approx(-res.fun + p.const, abs=1e-9)
    s = p.w00 * sol.q00 + p.w10 * sol.q10 + p.wconst
    assert p.band_lo - 1e-9 <= s <= p.band_hi + 1e-9


@pytest.mark.parametrize("seed", range(5))
def test_matches_dense_grid(seed):
    rng = np.random.default_rng(seed)
    a, b = np.sort(rng.uniform(0, 1, 2)), np.sort(rng.uniform(0, 1, 2))
    w = rng.normal(size=3)
    mid = w[0] * a.mean() + w[1] * b.mean() + w[2]
    p = TwoVarLpProblem(*rng.normal(size=3), tuple(a), tuple(b), *w, mid - 0.1, mid + 0.1)
    x = np.linspace(*a, 2001)[:, None]
    y = np.linspace(*b, 2001)[None, :]
    s = p.w00 * x + p.w10 * y + p.wconst
    obj = np.where((s >= p.band_lo) & (s <= p.band_hi), p.c00 * x + p.c10 * y + p.const, -np.inf)
    grid = obj.max()
    sol = solve_two_var_lp(p)
    assert grid <= sol.value + 1e-12
    step = max(a[1] - a[0], b[1] - b[0]) / 2000
    assert sol.value - grid <= 10 * step * (abs(p.c00) + abs(p.c10)) * (1 + 1 / min(abs(p.w00), abs(p.w10)))
