"""Inhomogeneous binary Markov chains and exact HMM posteriors.

Probabilities are stored for state 0 only; state-1 values are complements.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class BinaryMarkovChain:
    """First-order chain over {0,1}^n.

    ``init0`` is P(x_1 = 0). Row ``k-2`` of ``p0given`` holds
    (P(x_k = 0 | x_{k-1} = 0), P(x_k = 0 | x_{k-1} = 1)) for k = 2..n.
    """

    init0: float
    p0given: np.ndarray

    def __post_init__(self):
        p = np.array(self.p0given, dtype=float).reshape(-1, 2)
        if not 0.0 <= self.init0 <= 1.0:
            raise ValueError(f"init0 outside [0,1]: {self.init0}")
        if p.size and (np.any(p < 0.0) or np.any(p > 1.0) or not np.all(np.isfinite(p))):
            raise ValueError("transition probabilities outside [0,1]")
        p.setflags(write=False)
        object.__setattr__(self, "init0", float(self.init0))
        object.__setattr__(self, "p0given", p)

    @property
    def n(self) -> int:
        return self.p0given.shape[0] + 1

    @classmethod
    def homogeneous(cls, n: int, p00: float, p11: float, init0: float | None = None):
        """Chain with the same transition table at every step.

        When ``init0`` is omitted the stationary law is used.
        """
        if init0 is None:
            init0 = stationary_init(p00, p11)
        rows = np.tile([p00, 1.0 - p11], (n - 1, 1))
        return cls(init0, rows)

    def rho(self, k: int) -> tuple[float, float]:
        """(P(x_k=0|x_{k-1}=0), P(x_k=0|x_{k-1}=1)) with 1-based k in 2..n."""
        if not 2 <= k <= self.n:
            raise IndexError(f"transition index {k} outside 2..{self.n}")
        row = self.p0given[k - 2]
        return float(row[0]), float(row[1])

    def clamped(self, eps: float = 1e-9) -> "BinaryMarkovChain":
        return BinaryMarkovChain(
            min(max(self.init0, eps), 1.0 - eps), np.clip(self.p0given, eps, 1.0 - eps)
        )

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["k", "p0_init_or_p0g0", "p0g1"])
        w.writerow([1, fmt17(self.init0), ""])
        for k, (a, b) in enumerate(self.p0given, start=2):
            w.writerow([k, fmt17(a), fmt17(b)])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "BinaryMarkovChain":
        rows = list(csv.reader(io.StringIO(text)))
        if rows[0] != ["k", "p0_init_or_p0g0", "p0g1"]:
            raise ValueError(f"unexpected chain header {rows[0]}")
        body = rows[1:]
        init0 = float(body[0][1])
        trans = [(float(r[1]), float(r[2])) for r in body[1:]]
        return cls(init0, np.array(trans, dtype=float).reshape(-1, 2))


def fmt17(x: float) -> str:
    """Deterministic 17-significant-digit decimal rendering."""
    return format(float(x), ".17g")


def stationary_init(p00: float, p11: float) -> float:
    """Stationary probability of state 0 for a homogeneous 2-state chain."""
    if not (0.0 <= p00 <= 1.0 and 0.0 <= p11 <= 1.0):
        raise ValueError("transition probabilities must lie in [0,1]")
    denom = 2.0 - p00 - p11
    if denom <= 0.0:
        raise ValueError("no unique stationary law")
    return (1.0 - p11) / denom


def marginals(chain: BinaryMarkovChain) -> np.ndarray:
    """P(x_k = 0) for k = 1..n by forward propagation."""
    out = np.empty(chain.n)
    m = chain.init0
    out[0] = m
    for k, (a, b) in enumerate(chain.p0given, start=1):
        m = m * a + (1.0 - m) * b
        out[k] = m
    return out


def pair_joint(chain: BinaryMarkovChain, k: int) -> np.ndarray:
    """2x2 table f[i, j] = P(x_{k-1} = i, x_k = j), 1-based k in 2..n."""
    a, b = chain.rho(k)
    m = marginals(chain)[k - 2]
    return np.array([[m * a, m * (1.0 - a)], [(1.0 - m) * b, (1.0 - m) * (1.0 - b)]])


@dataclass(frozen=True)
class GaussianNodeLikelihood:
    """y_i ~ N(x_i, sigma^2) independently per node."""

    sigma: float

    def __post_init__(self):
        if not self.sigma > 0.0:
            raise ValueError("sigma must be positive")

    def log_table(self, y) -> np.ndarray:
        """(n, 2) array of log p(y_i | x_i = s) for s = 0, 1."""
        y = np.asarray(y, dtype=float)
        if not np.all(np.isfinite(y)):
            raise ValueError("observations must be finite")
        s2 = self.sigma**2
        norm = -0.5 * np.log(2.0 * np.pi * s2)
        return np.stack([norm - 0.5 * y**2 / s2, norm - 0.5 * (y - 1.0) ** 2 / s2], axis=1)


def posterior_from_log_table(prior: BinaryMarkovChain, loglik: np.ndarray) -> BinaryMarkovChain:
    """Exact posterior chain given per-node log-likelihoods of states 0 and 1."""
    loglik = np.asarray(loglik, dtype=float)
    n = prior.n
    if loglik.shape != (n, 2):
        raise ValueError(f"likelihood table shape {loglik.shape} != ({n}, 2)")
    if not np.all(np.isfinite(loglik)):
        raise ValueError("non-finite likelihood values")
    lik = np.exp(loglik - loglik.max(axis=1, keepdims=True))

    # beta[k, s] proportional to p(y_{k+1:n} | x_k = s), rescaled to max 1
    beta = np.ones((n, 2))
    for k in range(n - 1, 0, -1):
        a, b = prior.p0given[k - 1]
        w = lik[k] * beta[k]
        prev = np.array([a * w[0] + (1.0 - a) * w[1], b * w[0] + (1.0 - b) * w[1]])
        beta[k - 1] = prev / prev.max()

    w0 = prior.init0 * lik[0, 0] * beta[0, 0]
    w1 = (1.0 - prior.init0) * lik[0, 1] * beta[0, 1]
    init0 = w0 / (w0 + w1)
    trans = np.empty((n - 1, 2))
    for k in range(1, n):
        a, b = prior.p0given[k - 1]
        w = lik[k] * beta[k]
        for j, p0 in enumerate((a, b)):
            z0 = p0 * w[0]
            z1 = (1.0 - p0) * w[1]
            tot = z0 + z1
            trans[k - 1, j] = z0 / tot if tot > 0.0 else p0
    return BinaryMarkovChain(init0, trans)


def posterior_chain(prior: BinaryMarkovChain, lik: GaussianNodeLikelihood, y) -> BinaryMarkovChain:
    y = np.asarray(y, dtype=float)
    if y.shape != (prior.n,):
        raise ValueError(f"observation length {y.shape} does not match chain length {prior.n}")
    return posterior_from_log_table(prior, lik.log_table(y))


def sample_chains(chain: BinaryMarkovChain, size: int, rng: np.random.Generator) -> np.ndarray:
    """``size`` independent ancestral samples as a (size, n) uint8 array."""
    u = rng.random((size, chain.n))
    out = np.empty((size, chain.n), dtype=np.uint8)
    out[:, 0] = u[:, 0] >= chain.init0
    for k in range(1, chain.n):
        a, b = chain.p0given[k - 1]
        p0 = np.where(out[:, k - 1] == 0, a, b)
        out[:, k] = u[:, k] >= p0
    return out


def sample_chain(chain: BinaryMarkovChain, rng: np.random.Generator) -> np.ndarray:
    return sample_chains(chain, 1, rng)[0]
