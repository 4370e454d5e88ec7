"""Continuous piecewise-linear functions on a closed interval.

A function is stored as breakpoints and values, so continuity holds by
construction. A single-breakpoint function represents a width-0 domain.
"""

from __future__ import annotations

import bisect
import csv
import io
from dataclasses import dataclass

DOMAIN_TOL = 1e-12
MERGE_TOL = 1e-12
COLLINEAR_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class CplFunction:
    breakpoints: tuple[float, ...]
    values: tuple[float, ...]

    def __post_init__(self):
        if len(self.breakpoints) != len(self.values) or not self.breakpoints:
            raise ValueError("breakpoints and values must be non-empty and of equal length")
        for lo, hi in zip(self.breakpoints, self.breakpoints[1:]):
            if not hi > lo:
                raise ValueError("breakpoints must be strictly increasing")

    @classmethod
    def point(cls, t: float, value: float) -> "CplFunction":
        return cls((float(t),), (float(value),))

    @property
    def lo(self) -> float:
        return self.breakpoints[0]

    @property
    def hi(self) -> float:
        return self.breakpoints[-1]

    @property
    def is_point(self) -> bool:
        return len(self.breakpoints) == 1

    @property
    def n_pieces(self) -> int:
        return max(len(self.breakpoints) - 1, 1)

    def __call__(self, t: float) -> float:
        return eval_cpl(self, t)

    def piece_coeffs(self, j: int) -> tuple[float, float]:
        """(intercept, slope) of piece j, 1-based."""
        if not 1 <= j <= self.n_pieces:
            raise IndexError(f"piece {j} outside 1..{self.n_pieces}")
        if self.is_point:
            return self.values[0], 0.0
        t0, t1 = self.breakpoints[j - 1], self.breakpoints[j]
        v0, v1 = self.values[j - 1], self.values[j]
        b = (v1 - v0) / (t1 - t0)
        return v0 - b * t0, b

    def pieces(self):
        """Yield (t_lo, t_hi, intercept, slope) for every piece."""
        if self.is_point:
            yield self.lo, self.lo, self.values[0], 0.0
            return
        bp, vs = self.breakpoints, self.values
        for j in range(len(bp) - 1):
            b = (vs[j + 1] - vs[j]) / (bp[j + 1] - bp[j])
            yield bp[j], bp[j + 1], vs[j] - b * bp[j], b

    def slopes(self) -> list[float]:
        return [p[3] for p in self.pieces()]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t", "value"])
        for t, v in zip(self.breakpoints, self.values):
            w.writerow([format(t, ".17g"), format(v, ".17g")])
        return buf.getvalue()


def eval_cpl(f: CplFunction, t: float) -> float:
    bp = f.breakpoints
    if t < bp[0] - DOMAIN_TOL or t > bp[-1] + DOMAIN_TOL:
        raise ValueError(f"t={t!r} outside domain [{bp[0]!r}, {bp[-1]!r}]")
    if len(bp) == 1 or t <= bp[0]:
        return f.values[0]
    if t >= bp[-1]:
        return f.values[-1]
    i = bisect.bisect_right(bp, t) - 1
    t0, t1 = bp[i], bp[i + 1]
    v0, v1 = f.values[i], f.values[i + 1]
    if t == t0:
        return v0
    return v0 + (v1 - v0) * (t - t0) / (t1 - t0)


def from_samples(breakpoints, values, tol: float = COLLINEAR_TOL) -> CplFunction:
    """Build a CPL function from (t, value) samples.

    Samples closer than ``MERGE_TOL`` are merged keeping the larger value,
    and interior points collinear with their kept neighbours are dropped.
    """
    pts = sorted(zip(map(float, breakpoints), map(float, values)))
    if len(pts) < 2:
        raise ValueError("need at least two samples")
    merged = [list(pts[0])]
    for t, v in pts[1:]:
        if t - merged[-1][0] <= MERGE_TOL:
            if v > merged[-1][1]:
                merged[-1][1] = v
        else:
            merged.append([t, v])
    if len(merged) < 2:
        raise ValueError("fewer than 2 distinct breakpoints")
    return _prune(merged, tol)


def _prune(pts, tol: float) -> CplFunction:
    scale = max(abs(v) for _, v in pts) or 1.0
    thresh = tol * scale
    # repeat until stable: dropping a point can make its neighbours collinear
    while True:
        kept = [pts[0]]
        for i in range(1, len(pts) - 1):
            t0, v0 = kept[-1]
            t1, v1 = pts[i]
            t2, v2 = pts[i + 1]
            interp = v0 + (v2 - v0) * (t1 - t0) / (t2 - t0)
            if abs(v1 - interp) > thresh:
                kept.append(pts[i])
        kept.append(pts[-1])
        if len(kept) == len(pts):
            break
        pts = kept
    return CplFunction(tuple(p[0] for p in kept), tuple(p[1] for p in kept))
