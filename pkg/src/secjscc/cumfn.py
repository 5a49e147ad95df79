"""Regular cumulative functions on [0, 1] and their concave envelopes.

A step function stores right-continuous levels: ``values[j]`` holds on
``[breakpoints[j], breakpoints[j+1])`` and ``values[-1]`` is the value at 1.
A linear function stores knot values and interpolates between them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import UsageError, ValidationError

STEP = "step"
LINEAR = "linear"
KINDS = (STEP, LINEAR)

REGULARITY_TOL = 1e-12


def _check_grid(breakpoints: np.ndarray) -> None:
    if breakpoints.ndim != 1 or breakpoints.size < 2:
        raise ValidationError("need at least two breakpoints")
    if breakpoints[0] != 0.0 or breakpoints[-1] != 1.0:
        raise ValidationError("breakpoints must start at 0 and end at 1")
    if np.any(np.diff(breakpoints) <= 0):
        raise ValidationError("breakpoints must be strictly increasing")


@dataclass(frozen=True, eq=False)
class CumulativeFn:
    breakpoints: np.ndarray
    values: np.ndarray
    kind: str = STEP
    jumps: np.ndarray | None = None
    units: str = ""

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValidationError(f"unknown kind {self.kind!r}")
        b = np.array(self.breakpoints, dtype=np.float64)
        v = np.array(self.values, dtype=np.float64)
        _check_grid(b)
        if v.shape != b.shape:
            raise ValidationError(f"{v.size} values for {b.size} breakpoints")
        if np.any(np.isnan(v)):
            raise ValidationError("NaN value")
        if self.kind == LINEAR and not np.all(np.isfinite(v)):
            raise ValidationError("linear cumulative functions must be finite")
        if self.jumps is None:
            if self.kind == STEP:
                with np.errstate(invalid="ignore"):
                    j = np.nan_to_num(np.diff(v), nan=0.0, posinf=np.inf)
            else:
                j = None
        else:
            j = np.array(self.jumps, dtype=np.float64)
            if self.kind != STEP or j.size != b.size - 1:
                raise ValidationError("jumps only apply to step functions, one per interior breakpoint")
        for arr in (b, v) + ((j,) if j is not None else ()):
            arr.setflags(write=False)
        object.__setattr__(self, "breakpoints", b)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "jumps", j)

    @classmethod
    def step(cls, breakpoints: Sequence[float], values: Sequence[float], units: str = "") -> "CumulativeFn":
        return cls(breakpoints, values, STEP, units=units)

    @classmethod
    def linear(cls, breakpoints: Sequence[float], values: Sequence[float], units: str = "") -> "CumulativeFn":
        return cls(breakpoints, values, LINEAR, units=units)

    def __call__(self, alpha):
        return evaluate(self, alpha)

    def left_limit(self, alpha: float) -> float:
        """lim f(beta) as beta increases to alpha; equals f(0) at alpha=0."""
        _check_alpha(alpha)
        if self.kind == LINEAR:
            return float(np.interp(alpha, self.breakpoints, self.values))
        j = int(np.searchsorted(self.breakpoints, alpha, side="left")) - 1
        return float(self.values[max(j, 0)])

    def is_bounded(self) -> bool:
        return bool(np.all(np.isfinite(self.values)))

    def scaled(self, factor: float) -> "CumulativeFn":
        return CumulativeFn(self.breakpoints, self.values * factor, self.kind)

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "breakpoints": [float(x) for x in self.breakpoints],
            "values": [_json_float(x) for x in self.values],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CumulativeFn":
        return cls(d["breakpoints"], [float(x) for x in d["values"]], d.get("kind", STEP), units=d.get("units", ""))


def _json_float(x: float):
    return float(x) if math.isfinite(x) else "inf"


@dataclass(frozen=True, eq=False)
class PiecewiseLinearFn:
    """Continuous piecewise-linear function through ``(alphas[j], values[j])``."""

    alphas: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        a = np.array(self.alphas, dtype=np.float64)
        v = np.array(self.values, dtype=np.float64)
        _check_grid(a)
        if v.shape != a.shape or not np.all(np.isfinite(v)):
            raise ValidationError("knot values must be finite, one per alpha")
        a.setflags(write=False)
        v.setflags(write=False)
        object.__setattr__(self, "alphas", a)
        object.__setattr__(self, "values", v)

    @property
    def knots(self) -> list[tuple[float, float]]:
        return [(float(a), float(v)) for a, v in zip(self.alphas, self.values)]

    def __call__(self, alpha):
        a = np.asarray(alpha, dtype=np.float64)
        if np.any((a < 0) | (a > 1)):
            raise UsageError(f"alpha outside [0,1]: {alpha}")
        out = np.interp(a, self.alphas, self.values)
        return float(out) if out.ndim == 0 else out

    def as_cumulative(self) -> CumulativeFn:
        return CumulativeFn(self.alphas, self.values, LINEAR)


@dataclass(frozen=True)
class RegularityViolation:
    prop: str
    index: int
    alpha: float
    detail: str = ""

    def __str__(self):
        return f"{self.prop} violated at alpha={self.alpha:g} (breakpoint {self.index}): {self.detail}"


def validate_regular(f: CumulativeFn) -> RegularityViolation | None:
    """Return ``None`` when ``f`` is non-decreasing, zero at 0 and right-continuous."""
    v, b = f.values, f.breakpoints
    for j in range(1, v.size):
        if v[j] < v[j - 1] - REGULARITY_TOL:
            return RegularityViolation("non-decreasing", j, float(b[j]), f"{v[j - 1]:g} -> {v[j]:g}")
    if abs(v[0]) > REGULARITY_TOL:
        return RegularityViolation("zero initial value", 0, 0.0, f"f(0) = {v[0]:g}")
    # Right-continuity holds by representation: step levels are attached to
    # the left end of their interval and linear knots interpolate.
    return None


def require_regular(f: CumulativeFn, name: str = "function") -> None:
    bad = validate_regular(f)
    if bad is not None:
        raise ValidationError(f"{name} is not a regular cumulative function: {bad}")


def _check_alpha(alpha) -> None:
    a = np.asarray(alpha)
    if np.any((a < 0) | (a > 1)) or np.any(np.isnan(a)):
        raise UsageError(f"alpha outside [0,1]: {alpha}")


def evaluate(f: CumulativeFn, alpha):
    """Right-continuous evaluation for steps, interpolation for linear."""
    _check_alpha(alpha)
    a = np.asarray(alpha, dtype=np.float64)
    if f.kind == LINEAR:
        out = np.interp(a, f.breakpoints, f.values)
    else:
        idx = np.searchsorted(f.breakpoints, a, side="right") - 1
        out = f.values[idx]
    return float(out) if np.ndim(out) == 0 else out


def step_from_rates(rates: Sequence[float]) -> CumulativeFn:
    """Step CRDF on the uniform k-grid whose block increments are ``rates``."""
    r = np.asarray(rates, dtype=np.float64)
    if r.ndim != 1 or r.size < 1:
        raise ValidationError("need at least one rate")
    if np.any(r < 0) or not np.all(np.isfinite(r)):
        raise ValidationError("rates must be finite and non-negative")
    k = r.size
    grid = np.arange(k + 1) / k
    levels = np.concatenate([[0.0], np.cumsum(r)])
    return CumulativeFn(grid, levels, STEP, jumps=r)


def rates_from_crdf(g: CumulativeFn, k: int) -> np.ndarray:
    """r_i = G(i/k) - G((i-1)/k) for i = 1..k."""
    if k < 1:
        raise UsageError("k must be >= 1")
    if g.kind == LINEAR:
        vals = evaluate(g, np.arange(k + 1) / k)
        return np.maximum(np.diff(vals), 0.0)
    # Sum the stored jumps inside each block so that grids built by
    # step_from_rates round-trip without cancellation error.
    b = g.breakpoints[1:]
    out = np.zeros(k)
    lo = 0.0
    for i in range(1, k + 1):
        hi = i / k
        sel = (b > lo) & (b <= hi)
        out[i - 1] = math.fsum(g.jumps[sel])
        lo = hi
    return out


def _upper_hull(xs: np.ndarray, ys: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    order = np.lexsort((-ys, xs))
    xs, ys = xs[order], ys[order]
    keep = np.ones(xs.size, dtype=bool)
    keep[1:] = xs[1:] != xs[:-1]
    xs, ys = xs[keep], ys[keep]
    hx: list[float] = []
    hy: list[float] = []
    for x, y in zip(xs.tolist(), ys.tolist()):
        while len(hx) >= 2:
            cross = (hx[-1] - hx[-2]) * (y - hy[-2]) - (hy[-1] - hy[-2]) * (x - hx[-2])
            if cross >= 0:
                hx.pop()
                hy.pop()
            else:
                break
        hx.append(x)
        hy.append(y)
    return np.array(hx), np.array(hy)


def concave_envelope(f: CumulativeFn | PiecewiseLinearFn) -> PiecewiseLinearFn:
    """Least concave majorant on [0, 1].

    Step inputs use the exact breakpoints plus the left-limit top of every
    jump; linear inputs use their knots.
    """
    if isinstance(f, PiecewiseLinearFn):
        xs, ys = f.alphas, f.values
    elif f.kind == LINEAR:
        xs, ys = f.breakpoints, f.values
    else:
        if not f.is_bounded():
            raise UsageError("envelope of an unbounded function")
        xs = np.concatenate([f.breakpoints, f.breakpoints[1:]])
        ys = np.concatenate([f.values, f.values[:-1]])
    hx, hy = _upper_hull(np.asarray(xs, float), np.asarray(ys, float))
    return PiecewiseLinearFn(hx, hy)


def slopes(f: PiecewiseLinearFn) -> list[tuple[float, float]]:
    """(segment length, slope) for every linear piece."""
    da = np.diff(f.alphas)
    dv = np.diff(f.values)
    return [(float(a), float(v / a)) for a, v in zip(da, dv)]
