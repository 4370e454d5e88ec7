"""Brute-force references for small n.

Nothing here calls into the coupling optimizer: the exact filter enumerates
all 2^n lattice states, the pushforward check multiplies out the factorized
coupling, and the grid DP searches dense grids of (q00, q10).
"""

from __future__ import annotations

import numpy as np

from .chain import BinaryMarkovChain, marginals
from .optimizer import TransitionRule
from .truth import TrueModelTable

MAX_FILTER_N = 14
MAX_ENUM_N = 10
MAX_GRID_N = 5


def state_bits(n: int) -> np.ndarray:
    """(2^n, n) matrix of bits; row s holds x_1..x_n with x_1 most significant."""
    s = np.arange(2**n)
    return ((s[:, None] >> (n - 1 - np.arange(n))[None, :]) & 1).astype(np.uint8)


def _predict(table: TrueModelTable, old: np.ndarray, n: int) -> np.ndarray:
    """Push a distribution over x^{t-1} through the lattice transition law.

    Sweeps the sites left to right; the label of new x_i is i and of old
    x_i is n + i. An old site is summed out once no later factor needs it.
    """
    p1 = table.p1
    a = old.reshape((2,) * n)
    labels = [n + i for i in range(n)]
    for i in range(n):
        # factor P(x_i | x_{i-1}, o_{i-1}, o_i, o_{i+1}) as an array over present labels
        f = np.empty((2, 2, 2, 2, 2))
        f[..., 1] = p1.transpose(3, 0, 1, 2)  # axes: left_curr, left_prev, self_prev, right_prev
        f[..., 0] = 1.0 - f[..., 1]
        flabels = []
        idx = []
        for lab in (i - 1, n + i - 1):
            if i == 0:
                idx.append(0)
            else:
                idx.append(slice(None))
                flabels.append(lab)
        idx.append(slice(None))
        flabels.append(n + i)
        if i + 1 < n:
            idx.append(slice(None))
            flabels.append(n + i + 1)
        else:
            idx.append(0)
        idx.append(slice(None))
        flabels.append(i)
        f = f[tuple(idx)]
        done = {n + i - 1, n + i} if i == n - 1 else {n + i - 1}
        out = [lab for lab in labels if lab not in done] + [i]
        a = np.einsum(a, labels, f, flabels, out)
        labels = out
    return a.reshape(-1)


def exact_filter(table: TrueModelTable, y_all, sigma: float, n: int, T: int) -> list[np.ndarray]:
    """p(x^t | y^{1:t}) over all 2^n states for t = 1..T.

    The state at t = 0 is all zeros. Row t-1 of ``y_all`` holds y^t.
    """
    if n > MAX_FILTER_N:
        raise ValueError(f"exact filter limited to n <= {MAX_FILTER_N}, got {n}")
    y_all = np.asarray(y_all, dtype=float)
    if y_all.shape != (T, n):
        raise ValueError(f"observation matrix shape {y_all.shape} != ({T}, {n})")
    bits = state_bits(n).astype(float)
    state = np.zeros(2**n)
    state[0] = 1.0
    out = []
    for t in range(T):
        pred = _predict(table, state, n)
        y = y_all[t]
        ll = -0.5 * ((y[None, :] - bits) ** 2).sum(axis=1) / sigma**2
        w = pred * np.exp(ll - ll.max())
        state = w / w.sum()
        out.append(state)
    return out


def filter_marginals(states: list[np.ndarray], n: int) -> np.ndarray:
    """T x n matrix of P(x_i^t = 1 | y^{1:t})."""
    bits = state_bits(n).astype(float)
    return np.array([p @ bits for p in states])


def chain_joint(chain: BinaryMarkovChain) -> np.ndarray:
    """Probability of every state under a binary chain, by enumeration."""
    x = state_bits(chain.n)
    p = np.where(x[:, 0] == 0, chain.init0, 1.0 - chain.init0)
    for k in range(1, chain.n):
        a, b = chain.p0given[k - 1]
        p0 = np.where(x[:, k - 1] == 0, a, b)
        p = p * np.where(x[:, k] == 0, p0, 1.0 - p0)
    return p


def coupling_matrix(q: TransitionRule) -> np.ndarray:
    """Q[x, x~] = q(x~ | x) for all state pairs."""
    n = q.n
    x = state_bits(n)[:, None, :]
    xt = state_bits(n)[None, :, :]
    p0 = np.where(x[..., 0] == 0, q.first.q0, q.first.q1)
    Q = np.where(xt[..., 0] == 0, p0, 1.0 - p0)
    for k, f in enumerate(q.steps, start=1):
        table = np.array([[f.q00, f.q01], [f.q10, f.q11]])
        p0 = table[xt[..., k - 1], x[..., k]]
        Q = Q * np.where(xt[..., k] == 0, p0, 1.0 - p0)
    return Q


def enumerate_pushforward(q: TransitionRule, prior: BinaryMarkovChain) -> tuple[np.ndarray, float]:
    """Law of x~ when x ~ prior and x~ ~ q(.|x), plus E[#{i: x_i = x~_i}]."""
    n = prior.n
    if n > MAX_ENUM_N:
        raise ValueError(f"enumeration limited to n <= {MAX_ENUM_N}, got {n}")
    if q.n != n:
        raise ValueError("coupling and chain differ in length")
    fx = chain_joint(prior)
    joint = fx[:, None] * coupling_matrix(q)
    bits = state_bits(n)
    same = (bits[:, None, :] == bits[None, :, :]).sum(axis=2)
    return joint.sum(axis=0), float((joint * same).sum())


def pair_marginals(dist: np.ndarray, n: int) -> np.ndarray:
    """(n-1, 2, 2) adjacent-pair tables of a distribution over {0,1}^n."""
    a = dist.reshape((2,) * n)
    out = np.empty((n - 1, 2, 2))
    for k in range(n - 1):
        axes = tuple(i for i in range(n) if i not in (k, k + 1))
        out[k] = a.sum(axis=axes)
    return out


# -- grid dynamic program -----------------------------------------------------


def _step_inputs(prior: BinaryMarkovChain, post: BinaryMarkovChain):
    m = marginals(prior)
    g = marginals(post)
    rows = []
    for k in range(2, prior.n + 1):
        a, b = post.p0given[k - 2]
        gp = g[k - 2]
        rows.append(
            dict(
                m=m[k - 1],
                gp=gp,
                f00=gp * a,
                f10=(1.0 - gp) * b,
                rho=tuple(prior.p0given[k - 1]) if k < prior.n else None,
                lo=max(0.0, m[k - 1] + gp - 1.0),
                hi=min(m[k - 1], gp),
            )
        )
    return rows


def _grid_eval(s, t: np.ndarray, G: int):
    """Same-count and next-t over a G x G grid of (q00, q10) per t value.

    Shapes: t (T,) -> arrays (T, G, G).
    """
    p00 = t
    p01 = s["gp"] - t
    p10 = s["m"] - t
    p11 = 1.0 - s["m"] - s["gp"] + t
    lam = np.linspace(0.0, 1.0, G)

    def box(f, ps, po):
        safe = np.where(ps > 0.0, ps, 1.0)
        lo = np.where(ps > 0.0, np.clip((f - po) / safe, 0.0, 1.0), 0.0)
        hi = np.where(ps > 0.0, np.clip(f / safe, 0.0, 1.0), 1.0)
        hi = np.maximum(hi, lo)
        return lo[:, None] + (hi - lo)[:, None] * lam[None, :]

    q00 = box(s["f00"], p00, p01)[:, :, None]
    q10 = box(s["f10"], p10, p11)[:, None, :]
    P00, P01, P10, P11 = (p[:, None, None] for p in (p00, p01, p10, p11))
    m01 = s["f00"] - P00 * q00  # pi01 * q01
    m11 = s["f10"] - P10 * q10  # pi11 * q11
    same = P00 * q00 + (P01 - m01) + P10 * q10 + (P11 - m11)
    nxt = None
    if s["rho"] is not None:
        r0, r1 = s["rho"]
        nxt = r0 * (P00 * q00 + P10 * q10) + r1 * (m01 + m11)
    return same, nxt, q00, q10


def grid_dp_optimum(
    prior: BinaryMarkovChain,
    posterior: BinaryMarkovChain,
    grid_steps: int = 2000,
    q_grid: int = 41,
    forward_grid: int = 401,
    first_grid: int = 20001,
) -> float:
    """Achieved expected-unchanged count of a grid-DP coupling.

    The backward pass tabulates value functions on a uniform grid of each t_k,
    maximizing over a ``q_grid`` x ``q_grid`` grid of (q00, q10). The forward
    pass then picks q on finer grids using the tabulated values and scores the
    resulting coupling exactly, so the result is attainable and never exceeds
    the true optimum.
    """
    n = prior.n
    if n > MAX_GRID_N:
        raise ValueError(f"grid DP limited to n <= {MAX_GRID_N}, got {n}")
    if grid_steps < 1:
        raise ValueError("grid_steps must be positive")
    steps = _step_inputs(prior, posterior)

    tables = [None] * len(steps)  # (t_grid, values) per k = 2..n
    for idx in range(len(steps) - 1, -1, -1):
        s = steps[idx]
        tg = np.linspace(s["lo"], s["hi"], grid_steps + 1)
        vals = np.empty_like(tg)
        for c in range(0, tg.size, 128):
            chunk = tg[c : c + 128]
            same, nxt, _, _ = _grid_eval(s, chunk, q_grid)
            if nxt is not None:
                ng, nv = tables[idx + 1]
                same = same + np.interp(nxt, ng, nv)
            vals[c : c + 128] = same.reshape(chunk.size, -1).max(axis=1)
        tables[idx] = (tg, vals)

    # first factor: q_1^1 follows from q_1^0 through the marginal constraint
    t1 = prior.init0
    g1 = posterior.init0
    r0, r1 = prior.p0given[0]
    lo = max(0.0, (g1 - (1.0 - t1)) / t1)
    hi = min(1.0, g1 / t1)
    q0 = np.linspace(lo, max(hi, lo), first_grid)
    q1 = np.clip((g1 - t1 * q0) / (1.0 - t1), 0.0, 1.0)
    same1 = t1 * q0 + (1.0 - t1) * (1.0 - q1)
    t2 = t1 * q0 * r0 + (1.0 - t1) * q1 * r1
    ng, nv = tables[0]
    i = int(np.argmax(same1 + np.interp(t2, ng, nv)))
    total = float(same1[i])
    t = float(np.clip(t2[i], steps[0]["lo"], steps[0]["hi"]))

    for idx, s in enumerate(steps):
        same, nxt, _, _ = _grid_eval(s, np.array([t]), forward_grid)
        score = same if nxt is None else same + np.interp(nxt, *tables[idx + 1])
        j = np.unravel_index(int(np.argmax(score)), score.shape)
        total += float(same[j])
        if nxt is not None:
            t = float(np.clip(nxt[j], steps[idx + 1]["lo"], steps[idx + 1]["hi"]))
    return total
