import numpy as np
import pytest
from hypothesis import given, strategies as st

from binfilter import oracle
from binfilter.chain import BinaryMarkovChain, GaussianNodeLikelihood, marginals, posterior_chain
from binfilter.lp2 import InfeasibleSubproblem
from binfilter.optimizer import (
    FirstQFactor,
    QFactor,
    TBounds,
    TransitionRule,
    build_optimal_q,
    candidate_breakpoints,
    final_value,
    first_pi,
    pi_from_t,
    piece_values,
    solve_at,
    solve_final_step,
    solve_first_step,
    step_data,
    t_bounds,
    t_next,
    t_next_first,
)
from conftest import random_chain

PUBLISHED_T_STAR = (0.400000, 0.305356, 0.308676, 0.281108)
PUBLISHED_Q1 = (1.000000, 0.211299)
PUBLISHED_Q = (
    (1.0, 0.481489, 1.0, 0.097118),
    (1.0, 0.212926, 0.860986, 0.0),
    (0.853968, 0.0, 0.546043, 0.0),
)
# grid-DP oracle (grid_steps=2000) on the toy instance with the printed observations
TOY_OPTIMUM = 3.5721963958444
# observations solved to reproduce the six-digit posterior marginals; they round to the printed y
RECOVERED_Y = (-0.68128799, -1.58502728, 0.00667511, 3.10300423)


def pair_instances(seed, count, ns):
    out = []
    for i in range(count):
        rng = np.random.default_rng([seed, i])
        n = int(ns[i % len(ns)])
        prior = random_chain(rng, n)
        if i % 2:
            post = posterior_chain(prior, GaussianNodeLikelihood(rng.uniform(0.5, 3)), rng.normal(0.5, 1.5, n))
        else:
            post = random_chain(rng, n)
        out.append((prior, post))
    return out


def rule_entries(q: TransitionRule):
    return [*q.first, *(v for f in q.steps for v in f)]


@pytest.mark.parametrize(
    "m,g,expected",
    [(0.40, 0.526779, (0.0, 0.40)), (1.0, 0.37, (0.37, 0.37)), (0.6, 0.7, (0.3, 0.6))],
)
def test_t_bounds(m, g, expected):
    assert t_bounds(m, g) == pytest.approx(expected, abs=1e-15)


def test_pi_from_t_toy():
    pi = pi_from_t(0.3, 0.40, 0.526779)
    assert pi == pytest.approx((0.3, 0.226779, 0.1, 0.373221), abs=1e-15)


def test_pi_from_t_upper_end():
    pi = pi_from_t(0.4, 0.4, 0.6)
    assert pi.p10 == 0.0
    assert sum(pi) == pytest.approx(1.0, abs=1e-15)


def test_pi_from_t_out_of_bounds():
    with pytest.raises(ValueError):
        pi_from_t(0.41, 0.4, 0.6)


@given(st.floats(0, 1), st.floats(0, 1), st.floats(0, 1))
def test_pi_table_margins(m, g, u):
    tb = t_bounds(m, g)
    pi = pi_from_t(tb.t_min + u * tb.width, m, g)
    assert min(pi) >= 0.0
    assert sum(pi) == pytest.approx(1.0, abs=1e-12)
    assert pi.p00 + pi.p01 == pytest.approx(g, abs=1e-12)
    assert pi.p00 + pi.p10 == pytest.approx(m, abs=1e-12)


def test_t_next_identity_and_zero():
    pi = pi_from_t(0.25, 0.4, 0.55)
    # q = 1 moves all mass to x~_k = 0, so t_{k+1} = f(x_{k+1} = 0)
    assert t_next(QFactor(1, 1, 1, 1), 0.7, 0.2, pi) == pytest.approx(0.7 * 0.4 + 0.2 * 0.6, abs=1e-15)
    assert t_next(QFactor(0, 0, 0, 0), 0.7, 0.2, pi) == 0.0


def test_t_next_published_rule():
    pi = pi_from_t(PUBLISHED_T_STAR[1], 0.40, 0.526779)
    t3 = t_next(QFactor(*PUBLISHED_Q[0]), 0.7, 0.2, pi)
    assert abs(t3 - PUBLISHED_T_STAR[2]) <= 1e-5


def test_first_step_helpers():
    assert first_pi(0.4) == (0.4, 0.6, 0.0, 0.0)
    assert t_next_first(0.4, FirstQFactor(1.0, 0.211299), 0.7, 0.2) == pytest.approx(
        PUBLISHED_T_STAR[1], abs=1e-6
    )


def test_final_step_slopes_and_breakpoints(toy_prior, toy_posterior):
    s = step_data(toy_prior, toy_posterior)[-1]
    f = solve_final_step(s)
    assert f.lo == s.bounds.t_min and f.hi == s.bounds.t_max
    assert f.n_pieces <= 3
    for b in f.slopes():
        assert min(abs(b - v) for v in (-2.0, 0.0, 2.0)) <= 1e-9


def test_final_step_against_grid(toy_prior, toy_posterior):
    s = step_data(toy_prior, toy_posterior)[-1]
    f = solve_final_step(s)
    ts = np.linspace(s.bounds.t_min, s.bounds.t_max, 10**4)
    rows = oracle._step_inputs(toy_prior, toy_posterior)[-1]
    same, _, _, _ = oracle._grid_eval(rows, ts, 41)
    grid = same.reshape(ts.size, -1).max(axis=1)
    assert max(abs(f(t) - v) for t, v in zip(ts, grid)) < 1e-9


def test_final_step_identity_peak():
    c = random_chain(np.random.default_rng(4), 3)
    s = step_data(c, c)[-1]
    f = solve_final_step(s)
    assert max(f.values) == pytest.approx(1.0, abs=1e-12)
    assert f(s.f00) == pytest.approx(1.0, abs=1e-12)


def test_final_step_min_branch():
    # f00 above every feasible pi00 keeps q00 = 1, so the first term grows with slope 2
    prior = BinaryMarkovChain(0.5, [[0.5, 0.5]])
    post = BinaryMarkovChain(0.9, [[0.9, 0.1]])
    s = step_data(prior, post)[-1]
    assert s.f00 >= s.bounds.t_max
    assert final_value(s, s.bounds.t_max) - final_value(s, s.bounds.t_min) >= 0.0


def test_toy_rule_structure(toy_prior, toy_posterior):
    q = build_optimal_q(toy_prior, toy_posterior)
    m, g = marginals(toy_prior), marginals(toy_posterior)
    # prior below posterior at node 2: no mass leaves state 0
    assert m[1] < g[1] and q.steps[0].q00 == 1.0 and q.steps[0].q10 == 1.0
    # prior above posterior at node 4: no mass enters state 0 from x_4 = 1
    assert m[3] > g[3] and q.steps[2].q01 == 0.0 and q.steps[2].q11 == 0.0


def test_toy_optimum_matches_grid_oracle(toy_prior, toy_posterior):
    q = build_optimal_q(toy_prior, toy_posterior)
    assert abs(q.value - TOY_OPTIMUM) <= 1e-9
    assert abs(q.diagnostics["realized_value"] - q.value) <= 1e-9


def test_toy_first_step(toy_prior, toy_posterior):
    q = build_optimal_q(toy_prior, toy_posterior)
    assert q.t_star[0] == pytest.approx(0.4, abs=1e-15)
    assert q.first == pytest.approx(PUBLISHED_Q1, abs=1e-4)


def test_published_rule_with_recovered_observations(toy_prior):
    # the printed y is rounded to 3 decimals; inputs that reproduce the printed
    # posterior marginals reproduce every published rule entry closely
    post = posterior_chain(toy_prior, GaussianNodeLikelihood(2.0), RECOVERED_Y)
    np.testing.assert_allclose(marginals(post), (0.526779, 0.543379, 0.437279, 0.304977), atol=1e-6)
    q = build_optimal_q(toy_prior, post)
    np.testing.assert_allclose(q.t_star, PUBLISHED_T_STAR, atol=1e-5)
    np.testing.assert_allclose(q.first, PUBLISHED_Q1, atol=1e-5)
    np.testing.assert_allclose(np.array(q.steps), np.array(PUBLISHED_Q), atol=1e-5)


def test_identity_when_prior_equals_posterior():
    for seed in range(10):
        c = random_chain(np.random.default_rng(seed), int(np.random.default_rng(seed).integers(2, 9)))
        q = build_optimal_q(c, c)
        _, expected = oracle.enumerate_pushforward(q, c)
        assert abs(expected - c.n) <= 1e-12
        assert abs(q.diagnostics["realized_value"] - c.n) <= 1e-12
        # breakpoint roots lose a few ulps per step, so the tabulated optimum is looser
        assert abs(q.value - c.n) <= 1e-9
        assert q.is_identity(1e-12)


@pytest.mark.parametrize("prior,post", pair_instances(1, 30, range(2, 9)))
def test_pushforward_pairs_and_nodes(prior, post):
    q = build_optimal_q(prior, post)
    dist, expected = oracle.enumerate_pushforward(q, prior)
    target = oracle.chain_joint(post.clamped())
    n = prior.n
    np.testing.assert_allclose(oracle.pair_marginals(dist, n), oracle.pair_marginals(target, n), atol=1e-10)
    assert abs(expected - q.value) <= 1e-9
    for v in rule_entries(q):
        assert 0.0 <= v <= 1.0
    for k, (s, t) in enumerate(zip(step_data(prior.clamped(), post.clamped()), q.t_star), start=1):
        assert s.bounds.t_min - 1e-12 <= t <= s.bounds.t_max + 1e-12


@pytest.mark.parametrize("prior,post", pair_instances(2, 12, (2, 3, 4)))
def test_optimum_against_grid_dp(prior, post):
    q = build_optimal_q(prior, post)
    g = oracle.grid_dp_optimum(prior.clamped(), post.clamped(), 1000)
    assert g <= q.value + 1e-9
    assert q.value - g <= 5e-3


@pytest.mark.parametrize("prior,post", pair_instances(3, 12, range(2, 7)))
def test_beats_independent_resampling(prior, post):
    q = build_optimal_q(prior, post)
    m, g = marginals(prior.clamped()), marginals(post.clamped())
    assert q.value >= float(np.sum(m * g + (1 - m) * (1 - g))) - 1e-12


@pytest.mark.parametrize("prior,post", pair_instances(4, 8, (3, 4, 5)))
def test_value_functions_match_resolves(prior, post):
    q = build_optimal_q(prior, post)
    steps = step_data(prior.clamped(), post.clamped())
    rng = np.random.default_rng(0)
    for k, f in q.value_functions.items():
        s = steps[k - 1]
        for t in rng.uniform(f.lo, f.hi, 200):
            ref = final_value(s, t) if k == prior.n else solve_at(s, t, q.value_functions[k + 1]).value
            assert abs(f(t) - ref) <= 1e-9


@pytest.mark.parametrize("prior,post", pair_instances(5, 8, (3, 4, 5)))
def test_subproblems_linear_between_candidates(prior, post):
    q = build_optimal_q(prior, post)
    steps = step_data(prior.clamped(), post.clamped())
    for k in range(2, prior.n):
        s, e_next = steps[k - 1], q.value_functions[k + 1]
        cands = candidate_breakpoints(s, e_next)
        assert cands[0] == s.bounds.t_min and cands[-1] == s.bounds.t_max
        for t0, t1 in zip(cands, cands[1:]):
            r0, rm, r1 = (piece_values(s, t, e_next) for t in (t0, 0.5 * (t0 + t1), t1))
            for a, b, c in zip(r0, rm, r1):
                if a is not None and b is not None and c is not None:
                    assert abs(b - 0.5 * (a + c)) <= 1e-9


def test_first_step_against_grid():
    rng = np.random.default_rng(7)
    prior, post = random_chain(rng, 3), random_chain(rng, 3)
    q = build_optimal_q(prior, post)
    s = step_data(prior.clamped(), post.clamped())[0]
    value, q1 = solve_first_step(q.value_functions[2], s)
    t1, g1 = s.m, s.g
    q0 = np.linspace(max(0, (g1 - 1 + t1) / t1), min(1, g1 / t1), 2001)
    qq1 = (g1 - t1 * q0) / (1 - t1)
    ok = (qq1 >= 0) & (qq1 <= 1)
    same = t1 * q0 + (1 - t1) * (1 - qq1)
    t2 = t1 * q0 * s.rho00 + (1 - t1) * qq1 * s.rho01
    e2 = q.value_functions[2]
    t2 = np.clip(t2, e2.lo, e2.hi)
    grid = max(a + e2(b) for a, b, o in zip(same, t2, ok) if o)
    assert grid <= value + 1e-12
    assert value - grid <= 1e-3


def test_degenerate_domain_uses_point_functions():
    # f(x_k = 0) = 1 pins t_k to a single point
    prior = BinaryMarkovChain(0.3, [[1.0, 1.0], [0.6, 0.2]])
    post = BinaryMarkovChain(0.5, [[0.4, 0.7], [0.5, 0.5]])
    q = build_optimal_q(prior, post)
    dist, expected = oracle.enumerate_pushforward(q, prior)
    np.testing.assert_allclose(
        oracle.pair_marginals(dist, 3), oracle.pair_marginals(oracle.chain_joint(post), 3), atol=1e-8
    )
    assert abs(expected - q.value) <= 1e-8


def test_rule_csv_round_trip(toy_prior, toy_posterior):
    q = build_optimal_q(toy_prior, toy_posterior)
    text = q.to_csv()
    lines = text.splitlines()
    assert lines[0] == "k,q00,q01,q10,q11"
    assert lines[1].endswith(",,")
    back = TransitionRule.from_csv(text)
    assert back.first == q.first and back.steps == q.steps


def test_length_mismatch():
    with pytest.raises(ValueError):
        build_optimal_q(random_chain(np.random.default_rng(0), 3), random_chain(np.random.default_rng(0), 4))


def test_tbounds_helpers():
    tb = TBounds(0.2, 0.5)
    assert tb.width == pytest.approx(0.3)
    assert tb.clamp(0.7) == 0.5 and tb.clamp(0.1) == 0.2


def test_infeasible_error_type():
    assert issubclass(InfeasibleSubproblem, ValueError)
