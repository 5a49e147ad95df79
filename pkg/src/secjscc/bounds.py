"""Effective cumulative rate profiles and the rate bookkeeping around them.

Every profile has the form ``max{lo * G(a), hi * G(a) - c}`` where ``c`` is a
supremum over beta of ``(hi - lo) * G(beta) - L(beta) / scale``:

* outer:        lo = C_WT, hi = C,  scale = 1
* inner:        lo = C1,   hi = C2, scale = ell
* discretized:  outer parameters, supremum only over beta in {0, 1/k, ..., 1}

Rates are per source symbol and the analytic side works in the n -> oo
normalized regime; floors only appear in :class:`BlockSchedule`.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import cumfn
from .cumfn import LINEAR, STEP, CumulativeFn, PiecewiseLinearFn, concave_envelope, require_regular
from .errors import ConsistencyError, InfeasibleError, MajorizationError, UsageError, ValidationError
from .rdtool import RateDistortionCurve, SourceSpec, curve_for

OUTER = "outer"
INNER = "inner"
DISCRETIZED = "discretized"


@dataclass(frozen=True, eq=False)
class EffectiveProfile:
    kind: str
    base_G: CumulativeFn
    base_L: CumulativeFn
    params: dict
    raw: CumulativeFn
    envelope: PiecewiseLinearFn
    penalty_constant: float

    def raw_knots(self) -> list[tuple[float, float]]:
        return [(float(a), float(v)) for a, v in zip(self.raw.breakpoints, self.raw.values)]

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "params": dict(self.params),
            "penalty_constant": self.penalty_constant,
            "raw_kind": self.raw.kind,
            "raw_knots": [list(k) for k in self.raw_knots()],
            "envelope_knots": [list(k) for k in self.envelope.knots],
        }

    def to_csv(self, path, points: int = 101) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["alpha", "raw", "envelope"])
            for a in np.linspace(0.0, 1.0, points):
                w.writerow([repr(float(a)), repr(float(self.raw(a))), repr(float(self.envelope(a)))])


@dataclass(frozen=True)
class RateVector:
    """Per-block rate shares; ``k * entries[i]`` is the block's own source rate."""

    entries: tuple
    k: int

    def __post_init__(self):
        e = tuple(float(x) for x in self.entries)
        if any(x < 0 or not math.isfinite(x) for x in e):
            raise ValidationError("rate entries must be finite and non-negative")
        object.__setattr__(self, "entries", e)
        if self.k != len(e):
            raise ValidationError(f"k={self.k} but {len(e)} entries")

    @classmethod
    def of(cls, entries: Sequence[float]) -> "RateVector":
        return cls(tuple(entries), len(entries))

    @property
    def total(self) -> float:
        return math.fsum(self.entries)


@dataclass(frozen=True)
class BlockSchedule:
    k: int
    n: int
    r: tuple
    m: tuple

    @classmethod
    def from_rates(cls, r: Sequence[float], n: int) -> "BlockSchedule":
        k = len(r)
        m = [0]
        for ri in r:
            # nudge guards against products like 4 * 0.5 landing a hair below an integer
            m.append(m[-1] + int(math.floor(n * k * ri + 1e-9)))
        return cls(k, n, tuple(float(x) for x in r), tuple(m))

    @classmethod
    def from_crdf(cls, G: CumulativeFn, k: int, n: int) -> "BlockSchedule":
        return cls.from_rates(cumfn.rates_from_crdf(G, k), n)

    def block_lengths(self) -> list[int]:
        return [self.m[i] - self.m[i - 1] for i in range(1, self.k + 1)]


# -- effective profiles ---------------------------------------------------

def _check_inputs(G: CumulativeFn, L: CumulativeFn) -> None:
    require_regular(G, "G")
    require_regular(L, "L")
    if not G.is_bounded():
        raise UsageError("G must be bounded")


def _candidate_betas(G: CumulativeFn, L: CumulativeFn) -> np.ndarray:
    return np.union1d(np.union1d(G.breakpoints, L.breakpoints), [0.0, 1.0])


def supremum_penalty(G: CumulativeFn, L: CumulativeFn, gain: float, scale: float = 1.0) -> float:
    """sup over beta in [0,1] of gain * G(beta) - L(beta) / scale.

    Between consecutive breakpoints of G and L the supremand is constant or
    linear, so the supremum is attained at a breakpoint or approached from
    its left; both values are tested.
    """
    best = -math.inf
    for beta in _candidate_betas(G, L):
        for g, l in ((G(beta), L(beta)), (G.left_limit(beta), L.left_limit(beta))):
            val = gain * g - (l / scale if scale != 1.0 else l)
            if val > best:
                best = val
    return best


def grid_penalty(G: CumulativeFn, L: CumulativeFn, gain: float, k: int, scale: float = 1.0) -> float:
    """max over j in {0..k} of gain * G(j/k) - L(j/k) / scale."""
    best = -math.inf
    for j in range(k + 1):
        beta = j / k
        val = gain * G(beta) - (L(beta) / scale if scale != 1.0 else L(beta))
        if val > best:
            best = val
    return best


def _branch_max(g: np.ndarray, lo: float, hi: float, c: float) -> np.ndarray:
    """max(lo g, hi g - c), choosing the branch by the sign of (hi - lo) g - c.

    Comparing through the same expression that produced ``c`` keeps the
    limiting cases exact: with L = 0 the first branch wins everywhere, with
    c = 0 the second branch is exactly hi * g.
    """
    return np.where((hi - lo) * g - c > 0, hi * g - c, lo * g)


def _compose(G: CumulativeFn, lo: float, hi: float, c: float) -> CumulativeFn:
    """The function a -> max(lo * G(a), hi * G(a) - c) in G's own representation."""
    b, v = G.breakpoints, G.values
    if G.kind == STEP:
        return CumulativeFn(b, _branch_max(v, lo, hi, c), STEP)
    # G linear: add a knot where the two branches cross inside a segment
    knots_a, knots_v = [float(b[0])], [float(v[0])]
    if hi > lo:
        g_star = c / (hi - lo)
        for j in range(1, b.size):
            v0, v1 = v[j - 1], v[j]
            if v0 < g_star < v1:
                a_star = b[j - 1] + (g_star - v0) * (b[j] - b[j - 1]) / (v1 - v0)
                if b[j - 1] < a_star < b[j]:
                    knots_a.append(float(a_star))
                    knots_v.append(float(g_star))
            knots_a.append(float(b[j]))
            knots_v.append(float(v1))
    else:
        knots_a, knots_v = list(b), list(v)
    return CumulativeFn(np.array(knots_a), _branch_max(np.array(knots_v), lo, hi, c), LINEAR)


def _profile(kind, G, L, lo, hi, c, params) -> EffectiveProfile:
    raw = _compose(G, lo, hi, c)
    return EffectiveProfile(kind, G, L, params, raw, concave_envelope(raw), float(c))


def effective_out(G: CumulativeFn, L: CumulativeFn, C: float, C_WT: float) -> EffectiveProfile:
    """Outer-bound profile max{C_WT G, C G - sup((C - C_WT) G - L)}."""
    if C_WT > C:
        raise UsageError(f"C_WT={C_WT} exceeds C={C}")
    if C_WT < 0:
        raise UsageError("C_WT must be non-negative")
    _check_inputs(G, L)
    c = supremum_penalty(G, L, C - C_WT)
    return _profile(OUTER, G, L, C_WT, C, c, {"C": C, "C_WT": C_WT})


def effective_in(G: CumulativeFn, L: CumulativeFn, C1: float, C2: float, ell: float) -> EffectiveProfile:
    """Inner-bound profile max{C1 G, C2 G - sup((C2 - C1) G - L / ell)}."""
    if not ell > 0:
        raise UsageError(f"ell={ell} must be positive")
    if not C1 < C2:
        raise UsageError(f"need C1 < C2, got C1={C1}, C2={C2}")
    _check_inputs(G, L)
    c = supremum_penalty(G, L, C2 - C1, ell)
    return _profile(INNER, G, L, C1, C2, c, {"C1": C1, "C2": C2, "ell": ell})


def discretize_effective(G: CumulativeFn, L: CumulativeFn, C: float, C_WT: float, k: int) -> EffectiveProfile:
    """Outer profile with the supremum restricted to the grid j/k."""
    if k < 1:
        raise UsageError("k must be >= 1")
    if C_WT > C:
        raise UsageError(f"C_WT={C_WT} exceeds C={C}")
    _check_inputs(G, L)
    c = grid_penalty(G, L, C - C_WT, k)
    return _profile(DISCRETIZED, G, L, C_WT, C, c, {"C": C, "C_WT": C_WT, "k": k})


# -- distortion integral --------------------------------------------------

def piecewise_distortion(f: PiecewiseLinearFn, curve: RateDistortionCurve | SourceSpec) -> float:
    """Integral over [0,1] of D(f'(a)) da for piecewise-linear f."""
    if isinstance(curve, SourceSpec):
        curve = curve_for(curve)
    return math.fsum(length * curve.distortion(max(slope, 0.0)) for length, slope in cumfn.slopes(f))


def distortion_bound(profile: EffectiveProfile, curve: RateDistortionCurve | SourceSpec) -> float:
    """Integral of D(slope of the envelope); the criterion compares it with d_bar."""
    return piecewise_distortion(profile.envelope, curve)


def grid_interpolant(profile: EffectiveProfile, k: int) -> PiecewiseLinearFn:
    """Piecewise-linear interpolation of the raw profile through the points j/k."""
    a = np.arange(k + 1) / k
    return PiecewiseLinearFn(a, profile.raw(a))


# -- converse reshaping ---------------------------------------------------

def reshape_rates(rt: RateVector | Sequence[float], target_total: float, tol: float = 1e-12) -> RateVector:
    """Sort descending and inflate the first entry so the total hits ``target_total``."""
    if not isinstance(rt, RateVector):
        rt = RateVector.of(rt)
    s = sorted(rt.entries, reverse=True)
    total = math.fsum(s)
    slack = target_total - total
    if slack < -tol * max(1.0, abs(target_total)):
        raise InfeasibleError(f"target {target_total} below current total {total}")
    s[0] = s[0] + max(slack, 0.0)
    return RateVector(tuple(s), rt.k)


# -- rate deferral --------------------------------------------------------

@dataclass(frozen=True)
class Emission:
    origin: int  # block whose encoder produced the symbols (1-based)
    start: int  # first symbol index within that block's output
    stop: int  # one past the last


@dataclass(frozen=True)
class DeferralPlan:
    produced: tuple
    budgets: tuple
    blocks: tuple  # blocks[i] = tuple of Emission emitted during block i+1

    def emitted_counts(self) -> list[int]:
        return [sum(e.stop - e.start for e in blk) for blk in self.blocks]

    def is_identity(self) -> bool:
        return all(all(e.origin == i + 1 for e in blk) for i, blk in enumerate(self.blocks))


def defer_schedule(G1: CumulativeFn, G2: CumulativeFn, k: int, n: int,
                   produced: Sequence[int] | None = None, tol: float = 1e-12) -> DeferralPlan:
    """Re-time the output of a G1-code so it fits the per-block budgets of G2.

    ``produced[j]`` is the number of channel symbols the G1 encoder emits in
    block j (default: its full budget).  Symbols leave first-in first-out,
    never before the block that produced them.
    """
    require_regular(G1, "G1")
    require_regular(G2, "G2")
    betas = np.union1d(np.union1d(G1.breakpoints, G2.breakpoints), np.arange(k + 1) / k)
    for beta in betas:
        if G2(beta) > G1(beta) + tol:
            raise MajorizationError(f"G2 exceeds G1 at alpha={beta:g}: {G2(beta):g} > {G1(beta):g}")
    if abs(G1(1.0) - G2(1.0)) > tol:
        raise MajorizationError(f"endpoints differ: G1(1)={G1(1.0):g}, G2(1)={G2(1.0):g}")
    s1 = BlockSchedule.from_crdf(G1, k, n)
    s2 = BlockSchedule.from_crdf(G2, k, n)
    made = list(s1.block_lengths()) if produced is None else [int(x) for x in produced]
    if len(made) != k:
        raise UsageError(f"need {k} produced counts")
    for j, (p, cap) in enumerate(zip(made, s1.block_lengths()), start=1):
        if p < 0 or p > cap:
            raise UsageError(f"block {j} produces {p} symbols, budget is {cap}")
    budgets = s2.block_lengths()
    queue: list[list[int]] = []  # [origin, next, stop]
    blocks = []
    for i in range(k):
        if made[i]:
            queue.append([i + 1, 0, made[i]])
        room = budgets[i]
        out = []
        while room and queue:
            origin, nxt, stop = queue[0]
            take = min(room, stop - nxt)
            out.append(Emission(origin, nxt, nxt + take))
            room -= take
            if nxt + take == stop:
                queue.pop(0)
            else:
                queue[0][1] = nxt + take
        blocks.append(tuple(out))
    if queue:
        left = sum(stop - nxt for _, nxt, stop in queue)
        raise InfeasibleError(f"{left} symbols left after block {k}; floors need a larger n")
    return DeferralPlan(tuple(made), tuple(budgets), tuple(blocks))


# -- achievability bookkeeping --------------------------------------------

@dataclass(frozen=True)
class BlockPlan:
    source_rates: tuple  # envelope increments, the rates handed to the block source codes
    message_rates: tuple  # raw-profile increments R_i carried by the channel in block i
    channel_budgets: tuple  # r_i
    channel_rates: tuple  # R_i / r_i, bits per channel use
    leakage_bound: tuple  # ell * sum_{j<=i} max(0, R_j - r_j C1), bits per source symbol

    def to_dict(self) -> dict:
        return {k: list(v) for k, v in self.__dict__.items()}


def _rate_limits(profile: EffectiveProfile) -> tuple[float, float, float]:
    p = profile.params
    if profile.kind == INNER:
        return p["C1"], p["C2"], p["ell"]
    return p["C_WT"], p["C"], 1.0


def block_rate_plan(profile: EffectiveProfile, k: int, G: CumulativeFn | None = None, tol: float = 1e-12) -> BlockPlan:
    """Per-block rates on the k-grid and the check R_i <= C2 r_i."""
    G = profile.base_G if G is None else G
    lo, hi, ell = _rate_limits(profile)
    grid = np.arange(k + 1) / k
    env = profile.envelope(grid)
    raw = profile.raw(grid)
    source_rates = np.maximum(np.diff(env), 0.0)
    msg = np.maximum(np.diff(raw), 0.0)
    r = cumfn.rates_from_crdf(G, k)
    bar = np.zeros(k)
    for i in range(k):
        if r[i] <= 0:
            if msg[i] > tol:
                raise ConsistencyError(f"block {i + 1}: R_i={msg[i]:g} with no channel budget")
            continue
        bar[i] = msg[i] / r[i]
        if bar[i] > hi * (1 + tol) + tol:
            raise ConsistencyError(f"block {i + 1}: channel rate {bar[i]:g} exceeds {hi:g}")
    leak = np.cumsum(ell * np.maximum(0.0, msg - r * lo))
    return BlockPlan(tuple(source_rates.tolist()), tuple(msg.tolist()), tuple(r.tolist()),
                     tuple(bar.tolist()), tuple(leak.tolist()))
