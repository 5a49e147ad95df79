"""Rate-distortion and distortion-rate functions of finite memoryless sources.

R(D) is computed by the alternating-minimization (Blahut-Arimoto) iteration
on the Lagrangian ``F(s) = min_Q I(X; Xhat) + s E d`` (natural units).  For
any output law ``q`` the iteration yields both ``Phi(q) >= F(s)`` and the
certified lower bound ``Phi(q) - log max lambda``, and it stops once the gap
is below ``BA_GAP``.  Duality then gives ``R(D) = (F(s*) - s* D) / ln 2`` at
the slope ``s*`` whose test channel has distortion ``D``.
"""

from __future__ import annotations

import csv
import functools
import math
import threading
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.optimize import brentq

from .errors import InfeasibleError, UsageError, ValidationError
from .probkit import Pmf, binary_entropy

LN2 = math.log(2.0)
BA_GAP = 1e-10 * LN2  # nats; rate accuracy 1e-10 bits
BA_MAX_ITER = 10_000
SWEEP_POINTS = 512
EDGE_TOL = 1e-13


@dataclass(frozen=True, eq=False)
class SourceSpec:
    px: Pmf
    distortion: np.ndarray

    def __post_init__(self):
        px = self.px if isinstance(self.px, Pmf) else Pmf(self.px)
        d = np.array(self.distortion, dtype=np.float64)
        if d.ndim != 2 or d.shape[0] != px.alphabet_size or d.shape[1] < 1:
            raise ValidationError(f"distortion must be |X| x |Xhat| with |X|={px.alphabet_size}")
        if np.any(np.isnan(d)) or np.any(d < 0):
            raise ValidationError("distortion entries must be non-negative (inf marks forbidden pairs)")
        if not np.all(np.isfinite(d).any(axis=1)):
            raise ValidationError("every source letter needs a finite-distortion reconstruction")
        live = px.probs > 0
        if not np.any(np.all(np.isfinite(d[live]), axis=0)):
            raise ValidationError("no reconstruction letter has finite expected distortion (d_max infinite)")
        d.setflags(write=False)
        object.__setattr__(self, "px", px)
        object.__setattr__(self, "distortion", d)

    @classmethod
    def binary_hamming(cls, p: float) -> "SourceSpec":
        """Bernoulli(p) source with Hamming distortion."""
        return cls(Pmf([1.0 - p, p]), 1.0 - np.eye(2))

    @property
    def d_min(self) -> float:
        live = self.px.probs > 0
        return float(np.dot(self.px.probs[live], self.distortion[live].min(axis=1)))

    @property
    def d_max(self) -> float:
        live = self.px.probs > 0
        with np.errstate(invalid="ignore"):
            col = (self.px.probs[live, None] * self.distortion[live]).sum(axis=0)
        return float(np.nanmin(col))

    def best_constant(self) -> int:
        """Reconstruction letter attaining ``d_max``."""
        live = self.px.probs > 0
        col = (self.px.probs[live, None] * self.distortion[live]).sum(axis=0)
        return int(np.argmin(col))

    def __eq__(self, other):
        return (isinstance(other, SourceSpec) and self.px == other.px
                and np.array_equal(self.distortion, other.distortion))

    def __hash__(self):
        return hash((self.px, self.distortion.shape, self.distortion.tobytes()))

    def to_dict(self) -> dict:
        return {"px": self.px.probs.tolist(),
                "distortion": [[float(x) if math.isfinite(x) else "inf" for x in row] for row in self.distortion]}

    @classmethod
    def from_dict(cls, d: dict) -> "SourceSpec":
        return cls(Pmf(d["px"]), [[float(x) for x in row] for row in d["distortion"]])


@dataclass
class _Point:
    s: float
    q: np.ndarray
    D: float
    R: float  # bits
    phi: float  # nats, upper bound on F(s)
    gap: float  # nats


def _alternate(p: np.ndarray, a: np.ndarray, q0: np.ndarray):
    """Blahut-Arimoto on kernel ``a`` (rows already shifted); returns q, c, lam, iterations."""
    q = q0.copy()
    for it in range(1, BA_MAX_ITER + 1):
        c = a @ q
        lam = (p / c) @ a
        gap = math.log(lam.max())
        q = q * lam
        q /= q.sum()
        if gap < BA_GAP:
            break
    c = a @ q
    lam = (p / c) @ a
    return q, c, lam, it


@dataclass(eq=False)
class RateDistortionCurve:
    """Queryable R(D) / D(R) for one source with a cache of solved slopes."""

    source: SourceSpec
    _points: dict = field(default_factory=dict, repr=False)
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    def __post_init__(self):
        live = self.source.px.probs > 0
        self._p = self.source.px.probs[live]
        self._d = self.source.distortion[live]
        finite = np.isfinite(self._d)
        self._row_min = np.where(finite, self._d, np.inf).min(axis=1)
        excess = np.where(finite, self._d - self._row_min[:, None], np.inf)
        self._excess = excess
        pos = excess[np.isfinite(excess) & (excess > 0)]
        lo = pos.min() if pos.size else 1.0
        hi = pos.max() if pos.size else 1.0
        self._grid = np.geomspace(1e-3 / hi, 40.0 / lo, SWEEP_POINTS)
        self.d_min = self.source.d_min
        self.d_max = self.source.d_max
        self._r_at_dmin = None

    # -- core solver -----------------------------------------------------

    def _nearest_q(self, s: float) -> np.ndarray:
        if not self._points:
            return np.full(self._d.shape[1], 1.0 / self._d.shape[1])
        key = min(self._points, key=lambda t: abs(math.log(t) - math.log(s)))
        q = self._points[key].q
        # keep every letter alive so support can move with s
        return (q + 1e-6) / (1.0 + 1e-6 * q.size)

    def _solve(self, s: float) -> _Point:
        with self._lock:
            hit = self._points.get(s)
            if hit is not None:
                return hit
            q0 = self._nearest_q(s)
        with np.errstate(under="ignore"):
            a = np.exp(-s * self._excess)
        q, c, lam, _ = _alternate(self._p, a, q0)
        big_q = q[None, :] * a / c[:, None]
        dist = float(np.sum(self._p[:, None] * big_q * np.where(big_q > 0, self._d, 0.0)))
        phi = float(-np.dot(self._p, np.log(c)) + s * np.dot(self._p, self._row_min))
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.where(big_q > 0, big_q / q[None, :], 1.0)
        rate = float(np.sum(self._p[:, None] * big_q * np.log(ratio))) / LN2
        pt = _Point(s, q, dist, max(rate, 0.0), phi, math.log(lam.max()))
        with self._lock:
            self._points[s] = pt
        return pt

    def rate_at_dmin(self) -> float:
        """R(d_min): minimum I(X;Xhat) over test channels supported on per-letter minimizers."""
        if self._r_at_dmin is None:
            a = (self._excess <= 0).astype(np.float64)
            q0 = np.full(a.shape[1], 1.0 / a.shape[1])
            q, c, lam, _ = _alternate(self._p, a, q0)
            # Phi(q) with s = 0 over the restricted kernel is I at the optimum
            upper = float(-np.dot(self._p, np.log(c)))
            self._r_at_dmin = max(0.0, upper / LN2)
        return self._r_at_dmin

    def _bracket(self, key, target: float, increasing: bool):
        """Bisect the sweep grid for adjacent slopes whose ``key`` straddles ``target``."""
        lo, hi = 0, self._grid.size - 1
        f_lo, f_hi = key(self._solve(self._grid[lo])), key(self._solve(self._grid[hi]))
        sign = 1.0 if increasing else -1.0
        if sign * (f_lo - target) > 0:
            return None, lo
        if sign * (f_hi - target) < 0:
            return None, hi
        while hi - lo > 1:
            mid = (lo + hi) // 2
            if sign * (key(self._solve(self._grid[mid])) - target) < 0:
                lo = mid
            else:
                hi = mid
        return (self._grid[lo], self._grid[hi]), None

    def _root(self, key, target: float, increasing: bool) -> float:
        bracket, edge = self._bracket(key, target, increasing)
        if bracket is None:
            return self._grid[edge]
        a, b = bracket
        fa = key(self._solve(a)) - target
        fb = key(self._solve(b)) - target
        if fa == 0:
            return a
        if fb == 0:
            return b
        return brentq(lambda s: key(self._solve(s)) - target, a, b, xtol=1e-14, rtol=1e-13, maxiter=200)

    # -- public queries --------------------------------------------------

    def rate(self, D: float) -> float:
        if D < self.d_min - EDGE_TOL:
            raise InfeasibleError(f"distortion {D} below minimum achievable {self.d_min}")
        if D >= self.d_max - EDGE_TOL:
            return 0.0
        if D <= self.d_min + EDGE_TOL:
            return self.rate_at_dmin()
        s = self._root(lambda pt: pt.D, D, increasing=False)
        pt = self._solve(s)
        # Dual value at s; gap keeps it a lower bound, Phi an upper one.
        r = (pt.phi - s * D) / LN2
        return float(min(max(r, 0.0), self.rate_at_dmin()))

    def distortion(self, R: float) -> float:
        if R < 0:
            raise UsageError(f"negative rate {R}")
        if R <= 0.0:
            return self.d_max
        r_top = self.rate_at_dmin()
        if R >= r_top - EDGE_TOL:
            return self.d_min
        s = self._root(lambda pt: pt.R, R, increasing=True)
        pt = self._solve(s)
        d = (pt.phi - R * LN2) / s
        return float(min(max(d, self.d_min), self.d_max))

    def samples(self, points: int | None = None) -> list[tuple[float, float]]:
        """(D, R) pairs along the slope sweep, sorted by D, with both end points."""
        grid = self._grid if points is None else np.geomspace(self._grid[0], self._grid[-1], points)
        out = {(self.d_min, self.rate_at_dmin()), (self.d_max, 0.0)}
        for s in grid:
            pt = self._solve(float(s))
            if self.d_min < pt.D < self.d_max:
                out.add((pt.D, pt.R))
        return sorted(out)

    def to_csv(self, path, points: int | None = None) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["D", "R"])
            for d, r in self.samples(points):
                w.writerow([repr(d), repr(r)])


@functools.lru_cache(maxsize=64)
def curve_for(source: SourceSpec) -> RateDistortionCurve:
    return RateDistortionCurve(source)


def rate_at_distortion(source: SourceSpec, D: float) -> float:
    """R(D) in bits per source symbol."""
    return curve_for(source).rate(D)


def distortion_at_rate(source: SourceSpec, R: float) -> float:
    """D(R) = min{D : R(D) <= R}; clamps to d_min above R(d_min)."""
    return curve_for(source).distortion(R)


def closed_form_binary(p: float, D: float) -> float:
    """h(p) - h(D) for a Bernoulli(p) source under Hamming distortion."""
    if not 0.0 < p < 1.0:
        raise UsageError(f"p={p} must lie in (0, 1)")
    top = min(p, 1.0 - p)
    if not -EDGE_TOL <= D <= top + EDGE_TOL:
        raise UsageError(f"D={D} outside [0, {top}]")
    D = min(max(D, 0.0), top)
    return max(0.0, binary_entropy(p) - binary_entropy(D))


def evaluate_many(source: SourceSpec, ds: Sequence[float]) -> list[float]:
    curve = curve_for(source)
    return [curve.rate(d) for d in ds]
