"""Ground-truth spatio-temporal binary process on a 1-D lattice.

Site i at time t is drawn given its left neighbour at time t and the three
sites (i-1, i, i+1) at time t-1. Sites outside the lattice count as 0.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np

from .chain import fmt17

# rows (left_prev, self_prev, right_prev): (P(1 | left_curr=1), P(1 | left_curr=0))
DEFAULT_ROWS = (
    ((0, 0, 0), 0.0100, 0.0050),
    ((1, 0, 0), 0.0400, 0.0100),
    ((0, 1, 0), 0.9999, 0.9800),
    ((1, 1, 0), 0.9999, 0.9900),
    ((0, 0, 1), 0.0400, 0.0400),
    ((1, 0, 1), 0.9800, 0.0400),
    ((0, 1, 1), 0.9999, 0.9800),
    ((1, 1, 1), 0.9999, 0.9800),
)


def _default_p1() -> np.ndarray:
    p = np.empty((2, 2, 2, 2))
    for (l, s, r), p_lc1, p_lc0 in DEFAULT_ROWS:
        p[l, s, r, 1] = p_lc1
        p[l, s, r, 0] = p_lc0
    return p


@dataclass(frozen=True, eq=False)
class TrueModelTable:
    """P(x_i^t = 1) indexed [left_prev, self_prev, right_prev, left_curr]."""

    p1: np.ndarray = field(default_factory=_default_p1)

    def __post_init__(self):
        p = np.array(self.p1, dtype=float)
        if p.shape != (2, 2, 2, 2):
            raise ValueError(f"table must have shape (2,2,2,2), got {p.shape}")
        if np.any(p < 0.0) or np.any(p > 1.0) or not np.all(np.isfinite(p)):
            raise ValueError("table entries must lie in [0,1]")
        p.setflags(write=False)
        object.__setattr__(self, "p1", p)

    def __eq__(self, other):
        return isinstance(other, TrueModelTable) and np.array_equal(self.p1, other.p1)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["left_prev", "self_prev", "right_prev", "left_curr", "p1"])
        for idx in np.ndindex(2, 2, 2, 2):
            w.writerow([*idx, fmt17(self.p1[idx])])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "TrueModelTable":
        rows = list(csv.reader(io.StringIO(text)))
        if rows[0] != ["left_prev", "self_prev", "right_prev", "left_curr", "p1"]:
            raise ValueError(f"unexpected table header {rows[0]}")
        p = np.full((2, 2, 2, 2), np.nan)
        for r in rows[1:]:
            p[tuple(int(v) for v in r[:4])] = float(r[4])
        if np.isnan(p).any():
            raise ValueError("table CSV is missing entries")
        return cls(p)


@dataclass(frozen=True)
class ProcessConfig:
    n: int = 400
    T: int = 100
    sigma: float = 2.0

    def __post_init__(self):
        if self.n < 1 or self.T < 1:
            raise ValueError("n and T must be at least 1")
        if not self.sigma > 0.0:
            raise ValueError("sigma must be positive")


def _bit(v) -> int:
    """Out-of-lattice markers (None) count as 0."""
    return 0 if v is None else int(v)


def cond_prob_one(table: TrueModelTable, left_prev, self_prev, right_prev, left_curr) -> float:
    """P(x_i^t = 1 | neighbours); pass ``None`` for sites outside the lattice."""
    return float(
        table.p1[_bit(left_prev), _bit(self_prev), _bit(right_prev), _bit(left_curr)]
    )


def simulate_step(table: TrueModelTable, x_prev, rng: np.random.Generator) -> np.ndarray:
    """Draw x^t given x^{t-1}, sweeping sites left to right.

    ``x_prev`` may be a single vector or an (M, n) batch; batch rows are
    advanced independently.
    """
    prev = np.asarray(x_prev, dtype=np.uint8)
    single = prev.ndim == 1
    prev = np.atleast_2d(prev)
    M, n = prev.shape
    padded = np.zeros((M, n + 2), dtype=np.intp)
    padded[:, 1:-1] = prev
    u = rng.random((M, n))
    out = np.empty((M, n), dtype=np.uint8)
    left = np.zeros(M, dtype=np.intp)
    p1 = table.p1
    for i in range(n):
        p = p1[padded[:, i], padded[:, i + 1], padded[:, i + 2], left]
        out[:, i] = u[:, i] < p
        left = out[:, i].astype(np.intp)
    return out[0] if single else out


def simulate_observation(x, sigma: float, rng: np.random.Generator) -> np.ndarray:
    """y_i = x_i + sigma * N(0, 1), independently per site."""
    if not sigma > 0.0:
        raise ValueError("sigma must be positive")
    x = np.asarray(x, dtype=float)
    return x + sigma * rng.standard_normal(x.shape)


def simulate_truth(
    table: TrueModelTable, cfg: ProcessConfig, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray]:
    """(T, n) truth bits starting from the all-zero state at t = 0, plus observations."""
    x = np.zeros(cfg.n, dtype=np.uint8)
    truth = np.empty((cfg.T, cfg.n), dtype=np.uint8)
    obs = np.empty((cfg.T, cfg.n))
    for t in range(cfg.T):
        x = simulate_step(table, x, rng)
        truth[t] = x
        obs[t] = simulate_observation(x, cfg.sigma, rng)
    return truth, obs


def matrix_to_csv(a: np.ndarray, integer: bool = False) -> str:
    """Headerless CSV matrix, one row per time step."""
    a = np.atleast_2d(a)
    if integer:
        lines = (",".join(str(int(v)) for v in row) for row in a)
    else:
        lines = (",".join(fmt17(v) for v in row) for row in a)
    return "".join(line + "\n" for line in lines)


def matrix_from_csv(text: str, dtype=float) -> np.ndarray:
    rows = [r for r in csv.reader(io.StringIO(text)) if r]
    return np.array([[dtype(v) for v in r] for r in rows])
