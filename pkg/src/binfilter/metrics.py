"""Summary metrics for comparing filtering methods.

Undefined conditional estimates are returned as NaN and written as ``NA``.
"""

from __future__ import annotations

import numpy as np


def frobenius_diff(a, b) -> float:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch {a.shape} vs {b.shape}")
    return float(np.sqrt(((a - b) ** 2).sum()))


def _as_samples(samples) -> np.ndarray:
    x = np.atleast_2d(np.asarray(samples))
    if x.size == 0:
        raise ValueError("samples must be non-empty")
    return x


def _weights(weights, m: int) -> np.ndarray:
    if weights is None:
        return np.ones(m)
    w = np.asarray(weights, dtype=float)
    if w.shape != (m,):
        raise ValueError("one weight per sample required")
    return w


def contact_probability(samples, i: int, j: int, weights=None) -> float:
    """P(x_l = 1 for all l between i and j | x_i = 1), 1-based nodes.

    Returns NaN when no sample has x_i = 1.
    """
    x = _as_samples(samples)
    w = _weights(weights, x.shape[0])
    lo, hi = min(i, j) - 1, max(i, j)
    if lo < 0 or hi > x.shape[1]:
        raise IndexError("node index outside 1..n")
    cond = x[:, i - 1] == 1
    den = w[cond].sum()
    if den <= 0.0:
        return float("nan")
    hit = cond & (x[:, lo:hi] == 1).all(axis=1)
    return float(w[hit].sum() / den)


def contact_profile(samples, i: int, weights=None) -> np.ndarray:
    """contact_probability(samples, i, j) for j = 1..n."""
    x = _as_samples(samples)
    w = _weights(weights, x.shape[0])
    n = x.shape[1]
    cond = x[:, i - 1] == 1
    den = w[cond].sum()
    if den <= 0.0:
        return np.full(n, np.nan)
    out = np.empty(n)
    # all-ones from i outward: cumulative products on each side
    right = np.cumprod(x[:, i - 1 :] == 1, axis=1)
    left = np.cumprod((x[:, : i][:, ::-1]) == 1, axis=1)[:, ::-1]
    out[i - 1 :] = (w[:, None] * right).sum(axis=0) / den
    out[: i] = (w[:, None] * left).sum(axis=0) / den
    return out


def run_lengths(row) -> list[int]:
    """Lengths of maximal all-ones runs in a binary vector, left to right."""
    runs = []
    count = 0
    for v in row:
        if v:
            count += 1
        elif count:
            runs.append(count)
            count = 0
    if count:
        runs.append(count)
    return runs


def contact_length_cdf(samples, weights=None) -> np.ndarray:
    """F(l) = P(L_i <= l | x_i = 1) for l = 1..n, with i uniform over nodes.

    L_i is the length of the all-ones run containing node i; each run of
    length L contributes weight L. All-NaN when no sample has a one.
    """
    x = _as_samples(samples)
    w = _weights(weights, x.shape[0])
    n = x.shape[1]
    mass = np.zeros(n + 1)
    for row, wt in zip(x, w):
        for L in run_lengths(row):
            mass[L] += wt * L
    total = mass.sum()
    if total <= 0.0:
        return np.full(n, np.nan)
    return np.cumsum(mass[1:]) / total


def quantile_interval(values, level: float = 0.90) -> tuple[float, float]:
    """Central empirical interval by linear interpolation of order statistics (type 7)."""
    v = np.asarray(values, dtype=float)
    if v.size < 2:
        raise ValueError("need at least two values")
    if not 0.0 < level < 1.0:
        raise ValueError("level must lie in (0,1)")
    a = (1.0 - level) / 2.0
    lo, hi = np.quantile(v, [a, 1.0 - a], method="linear")
    return float(lo), float(hi)


def fmt_na(x: float) -> str:
    return "NA" if np.isnan(x) else format(float(x), ".17g")
