"""Finite-alphabet probability primitives.

Distributions and channels are immutable wrappers around float64 numpy
arrays.  All information quantities are in bits.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import UsageError, ValidationError

NORM_TOL = 1e-12
RENORM_TOL = 1e-9
MAX_JOINT_CELLS = 2**20


def _normalized(arr: np.ndarray, axis, what: str) -> np.ndarray:
    if not np.all(np.isfinite(arr)):
        raise ValidationError(f"{what}: non-finite entry")
    if np.any(arr < 0):
        raise ValidationError(f"{what}: negative entry {arr.min()!r}")
    total = arr.sum(axis=axis, keepdims=axis is not None)
    drift = np.max(np.abs(total - 1.0))
    if drift <= NORM_TOL:
        return arr
    if drift <= RENORM_TOL:
        warnings.warn(f"{what}: renormalizing (drift {drift:.3g})", RuntimeWarning, stacklevel=3)
        return arr / total
    raise ValidationError(f"{what}: mass deviates from 1 by {drift:.3g}")


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr = np.array(arr, dtype=np.float64)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class Pmf:
    """Probability vector over ``range(alphabet_size)``."""

    probs: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=np.float64)
        if p.ndim != 1 or p.size < 1:
            raise ValidationError("Pmf needs a non-empty 1-D vector")
        object.__setattr__(self, "probs", _frozen(_normalized(p, None, "Pmf")))

    @property
    def alphabet_size(self) -> int:
        return self.probs.size

    @classmethod
    def uniform(cls, size: int) -> "Pmf":
        return cls(np.full(size, 1.0 / size))

    def __len__(self):
        return self.probs.size

    def __eq__(self, other):
        return isinstance(other, Pmf) and np.array_equal(self.probs, other.probs)

    def __hash__(self):
        return hash(self.probs.tobytes())


@dataclass(frozen=True, eq=False)
class Dmc:
    """Row-stochastic channel matrix ``rows[u, v] = p(v|u)``."""

    rows: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.rows, dtype=np.float64)
        if w.ndim != 2 or 0 in w.shape:
            raise ValidationError("Dmc needs a non-empty 2-D matrix")
        object.__setattr__(self, "rows", _frozen(_normalized(w, 1, "Dmc row")))

    @property
    def input_size(self) -> int:
        return self.rows.shape[0]

    @property
    def output_size(self) -> int:
        return self.rows.shape[1]

    def __eq__(self, other):
        return isinstance(other, Dmc) and np.array_equal(self.rows, other.rows)

    def __hash__(self):
        return hash((self.rows.shape, self.rows.tobytes()))


@dataclass(frozen=True, eq=False)
class WiretapKernel:
    """Joint channel ``rows[u, v, z] = p(v, z | u)``."""

    rows: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.rows, dtype=np.float64)
        if w.ndim != 3 or 0 in w.shape:
            raise ValidationError("WiretapKernel needs a non-empty 3-D array")
        object.__setattr__(self, "rows", _frozen(_normalized(w, (1, 2), "WiretapKernel slice")))

    @property
    def input_size(self) -> int:
        return self.rows.shape[0]

    @property
    def legit_size(self) -> int:
        return self.rows.shape[1]

    @property
    def eaves_size(self) -> int:
        return self.rows.shape[2]

    @classmethod
    def from_cascade(cls, main: Dmc, degrade: Dmc) -> "WiretapKernel":
        """Physically degraded kernel U -> V -> Z with p(z|v) = ``degrade``."""
        if main.output_size != degrade.input_size:
            raise UsageError("cascade: main output size must match degrade input size")
        return cls(main.rows[:, :, None] * degrade.rows[None, :, :])

    @classmethod
    def from_marginals(cls, main: Dmc, eaves: Dmc) -> "WiretapKernel":
        """Kernel with V and Z conditionally independent given U."""
        if main.input_size != eaves.input_size:
            raise UsageError("main and eavesdropper channels need the same input alphabet")
        return cls(main.rows[:, :, None] * eaves.rows[:, None, :])

    def __eq__(self, other):
        return isinstance(other, WiretapKernel) and np.array_equal(self.rows, other.rows)

    def __hash__(self):
        return hash((self.rows.shape, self.rows.tobytes()))


@dataclass(frozen=True, eq=False)
class JointDist:
    """Dense joint pmf over named finite variables (axis order = ``names``)."""

    table: np.ndarray
    names: tuple
    max_cells: int = MAX_JOINT_CELLS

    def __post_init__(self):
        t = np.asarray(self.table, dtype=np.float64)
        names = tuple(self.names)
        if t.ndim != len(names):
            raise ValidationError(f"JointDist: {t.ndim} axes but {len(names)} names")
        if len(set(names)) != len(names):
            raise ValidationError("JointDist: duplicate variable names")
        if t.size > self.max_cells:
            raise ValidationError(f"JointDist: {t.size} cells exceeds cap {self.max_cells}")
        object.__setattr__(self, "table", _frozen(_normalized(t, None, "JointDist")))
        object.__setattr__(self, "names", names)

    def marginal(self, keep: Iterable[str]) -> np.ndarray:
        keep = list(keep)
        missing = [v for v in keep if v not in self.names]
        if missing:
            raise UsageError(f"unknown variables {missing}")
        drop = tuple(i for i, v in enumerate(self.names) if v not in keep)
        return self.table.sum(axis=drop) if drop else self.table


def binary_entropy(p: float) -> float:
    if not 0.0 <= p <= 1.0:
        raise UsageError(f"binary_entropy: p={p} outside [0,1]")
    if p in (0.0, 1.0):
        return 0.0
    return -p * math.log2(p) - (1.0 - p) * math.log2(1.0 - p)


def _entropy_array(p: np.ndarray) -> float:
    p = p[p > 0]
    return float(-np.sum(p * np.log2(p)))


def entropy(p: Pmf | Sequence[float]) -> float:
    """Shannon entropy in bits, with 0 log 0 = 0."""
    if not isinstance(p, Pmf):
        p = Pmf(p)
    h = _entropy_array(p.probs)
    return 0.0 if h <= 0.0 else h


def mutual_information(joint: JointDist, group_a: Iterable[str], group_b: Iterable[str]) -> float:
    """I(A;B) = H(A) + H(B) - H(A,B) for disjoint variable groups."""
    a, b = list(group_a), list(group_b)
    if not a or not b:
        raise UsageError("mutual_information: empty variable group")
    if set(a) & set(b):
        raise UsageError(f"mutual_information: overlapping groups {sorted(set(a) & set(b))}")
    h_a = _entropy_array(joint.marginal(a).ravel())
    h_b = _entropy_array(joint.marginal(b).ravel())
    h_ab = _entropy_array(joint.marginal(a + b).ravel())
    return max(0.0, h_a + h_b - h_ab)


def mutual_information_matrix(pxy: np.ndarray) -> float:
    """I(X;Y) for a 2-D joint table without building a JointDist."""
    pxy = np.asarray(pxy, dtype=np.float64)
    h = _entropy_array(pxy.sum(axis=1)) + _entropy_array(pxy.sum(axis=0)) - _entropy_array(pxy.ravel())
    return max(0.0, h)


def channel_mutual_information(p: np.ndarray, w: np.ndarray) -> float:
    """I(U;V) for input vector ``p`` and channel matrix ``w``."""
    return mutual_information_matrix(np.asarray(p)[:, None] * w)


def push_through(p: Pmf, ch: Dmc) -> Pmf:
    if p.alphabet_size != ch.input_size:
        raise UsageError(f"push_through: pmf size {p.alphabet_size} vs channel input {ch.input_size}")
    return Pmf(p.probs @ ch.rows)


def marginal_v(w: WiretapKernel) -> Dmc:
    return Dmc(w.rows.sum(axis=2))


def marginal_z(w: WiretapKernel) -> Dmc:
    return Dmc(w.rows.sum(axis=1))


def bsc(eps: float) -> Dmc:
    """Binary symmetric channel with crossover ``eps``."""
    if not 0.0 <= eps <= 1.0:
        raise UsageError(f"bsc: crossover {eps} outside [0,1]")
    return Dmc([[1.0 - eps, eps], [eps, 1.0 - eps]])


def identity_channel(size: int) -> Dmc:
    return Dmc(np.eye(size))


def hamming_distortion(size: int, recon_size: int | None = None) -> np.ndarray:
    recon_size = size if recon_size is None else recon_size
    return 1.0 - np.eye(size, recon_size)
