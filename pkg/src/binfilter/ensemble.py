"""Ensembles of binary vectors: chain estimation and member updates."""

from __future__ import annotations

import gzip
import io
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .chain import BinaryMarkovChain, sample_chains
from .optimizer import TransitionRule


@dataclass(frozen=True, eq=False)
class Ensemble:
    """M members of length n held as an (M, n) uint8 matrix."""

    members: np.ndarray

    def __post_init__(self):
        a = np.array(self.members)
        if a.ndim != 2 or a.shape[0] < 1:
            raise ValueError("members must be a non-empty (M, n) matrix")
        if not np.isin(a, (0, 1)).all():
            raise ValueError("members must contain only 0 and 1")
        a = a.astype(np.uint8)
        a.setflags(write=False)
        object.__setattr__(self, "members", a)

    @property
    def M(self) -> int:
        return self.members.shape[0]

    @property
    def n(self) -> int:
        return self.members.shape[1]

    def mean(self) -> np.ndarray:
        """Fraction of members with x_i = 1, per node."""
        return self.members.mean(axis=0)

    def to_csv(self) -> str:
        return "".join(",".join(map(str, row)) + "\n" for row in self.members)

    @classmethod
    def from_csv(cls, text: str) -> "Ensemble":
        rows = [line.split(",") for line in text.splitlines() if line]
        return cls(np.array(rows, dtype=np.uint8))

    def save(self, path) -> None:
        """Write a snapshot; a ``.gz`` suffix selects gzip compression."""
        path = Path(path)
        data = self.to_csv().encode("utf-8")
        if path.suffix == ".gz":
            # fixed mtime keeps compressed snapshots byte-identical across runs
            with open(path, "wb") as fh, gzip.GzipFile(fileobj=fh, mode="wb", mtime=0) as gz:
                gz.write(data)
        else:
            path.write_bytes(data)

    @classmethod
    def load(cls, path) -> "Ensemble":
        path = Path(path)
        raw = path.read_bytes()
        if path.suffix == ".gz":
            raw = gzip.decompress(raw)
        return cls.from_csv(io.TextIOWrapper(io.BytesIO(raw), encoding="utf-8").read())


@dataclass(frozen=True)
class EstimationPrior:
    alpha: float = 2.0
    beta: float = 2.0

    def __post_init__(self):
        if not (self.alpha > 0.0 and self.beta > 0.0):
            raise ValueError("Beta hyperparameters must be positive")


def estimate_chain(e: Ensemble, prior: EstimationPrior = EstimationPrior()) -> BinaryMarkovChain:
    """Posterior-mean chain parameters under independent Beta priors.

    Each probability of a 0 is estimated as (zeros + alpha) / (count + alpha + beta),
    separately for every transition step.
    """
    x = e.members
    if x.shape[1] < 2:
        raise ValueError("need n >= 2 to estimate a chain")
    a, b = prior.alpha, prior.beta
    M = x.shape[0]
    init0 = (np.count_nonzero(x[:, 0] == 0) + a) / (M + a + b)
    prev, cur = x[:, :-1], x[:, 1:]
    trans = np.empty((x.shape[1] - 1, 2))
    for j in (0, 1):
        cond = prev == j
        zeros = np.count_nonzero(cond & (cur == 0), axis=0)
        trans[:, j] = (zeros + a) / (np.count_nonzero(cond, axis=0) + a + b)
    return BinaryMarkovChain(float(init0), trans)


def update_members(x: np.ndarray, q: TransitionRule, rng: np.random.Generator) -> np.ndarray:
    """Draw x~ ~ q(.|x) for each row of an (M, n) matrix."""
    x = np.atleast_2d(np.asarray(x, dtype=np.uint8))
    M, n = x.shape
    if n != q.n:
        raise ValueError(f"member length {n} does not match rule length {q.n}")
    u = rng.random((M, n))
    out = np.empty((M, n), dtype=np.uint8)
    p0 = np.where(x[:, 0] == 0, q.first.q0, q.first.q1)
    out[:, 0] = u[:, 0] >= p0
    for k, f in enumerate(q.steps, start=1):
        table = np.array([[f.q00, f.q01], [f.q10, f.q11]])
        p0 = table[out[:, k - 1], x[:, k]]
        out[:, k] = u[:, k] >= p0
    return out


def update_member(x, q: TransitionRule, rng: np.random.Generator) -> np.ndarray:
    """Draw one updated vector x~ given x under the factorized rule ``q``."""
    return update_members(np.asarray(x)[None, :], q, rng)[0]


def update_ensemble(e: Ensemble, q: TransitionRule, rng: np.random.Generator) -> Ensemble:
    return Ensemble(update_members(e.members, q, rng))


def resample_assumed(posterior: BinaryMarkovChain, M: int, rng: np.random.Generator) -> Ensemble:
    """M independent draws from the assumed posterior chain."""
    if M < 1:
        raise ValueError("M must be at least 1")
    return Ensemble(sample_chains(posterior, M, rng))
