"""Channel-side quantities for wiretap channels.

Capacity uses the Blahut-Arimoto iteration with its standard upper bound
``max_u D(W_u || pW)`` as stopping certificate.  The secrecy objective
``I(W;V) - I(W;Z)`` over joint laws p(w, u) is not concave, so it is
maximized by deterministic multi-start ascent and only the best value found
is reported.
"""

from __future__ import annotations

import itertools
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import ConsistencyError, UsageError
from .probkit import Dmc, Pmf, WiretapKernel, channel_mutual_information, marginal_v, marginal_z

LN2 = math.log(2.0)
CAPACITY_GAP = 1e-12
CAPACITY_MAX_ITER = 100_000
DEFAULT_STARTS = 64
ASCENT_MAX_ITER = 4000
ASCENT_TOL = 1e-15
LINEAR_TOL = 1e-6


@dataclass(frozen=True, eq=False)
class AuxiliaryInput:
    """Joint law p(w, u) of the auxiliary and the channel input."""

    joint: np.ndarray
    start: int = -1
    seed: int | None = None

    def __post_init__(self):
        j = np.array(self.joint, dtype=np.float64)
        Pmf(j.ravel())
        j.setflags(write=False)
        object.__setattr__(self, "joint", j)

    @property
    def aux_size(self) -> int:
        return self.joint.shape[0]

    @property
    def input_marginal(self) -> Pmf:
        return Pmf(self.joint.sum(axis=0))

    def to_dict(self) -> dict:
        return {"aux_size": self.aux_size, "joint": self.joint.tolist(), "start": self.start, "seed": self.seed}


@dataclass(frozen=True)
class ChannelSummary:
    C: float
    C_WT: float
    C1: float
    C2: float
    ell: float
    capacity_input: Pmf
    secrecy_input: AuxiliaryInput
    flags: tuple = ()
    boundary: tuple = field(default=(), repr=False)

    def to_dict(self) -> dict:
        return {
            "C": self.C, "C_WT": self.C_WT, "C1": self.C1, "C2": self.C2, "ell": self.ell,
            "capacity_input": self.capacity_input.probs.tolist(),
            "secrecy_input": self.secrecy_input.to_dict(),
            "flags": list(self.flags),
        }


# -- capacity -------------------------------------------------------------

def _divergences(w: np.ndarray, q: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(w > 0, w * np.log(w / q), 0.0)
    return t.sum(axis=1)


def capacity(ch: Dmc) -> tuple[float, Pmf]:
    """Channel capacity in bits and a capacity-achieving input law."""
    w = ch.rows
    p = np.full(ch.input_size, 1.0 / ch.input_size)
    for _ in range(CAPACITY_MAX_ITER):
        d = _divergences(w, p @ w)
        lower = float(np.dot(p, d))
        if d.max() - lower < CAPACITY_GAP * LN2:
            break
        p = p * np.exp(d - d.max())
        p /= p.sum()
    return channel_mutual_information(p, w), Pmf(p)


# -- secrecy objective ----------------------------------------------------

def _info_terms(joint: np.ndarray, w: np.ndarray):
    """I(W; output) in nats and its gradient with respect to joint[w, u]."""
    pw = joint.sum(axis=1)
    pwo = joint @ w
    po = pwo.sum(axis=0)
    with np.errstate(divide="ignore", invalid="ignore"):
        cond = np.where(pw[:, None] > 0, pwo / pw[:, None], 0.0)
        log_ratio = np.where(cond > 0, np.log(cond / po), 0.0)
        info = float(np.sum(np.where(pwo > 0, pwo * log_ratio, 0.0)))
        grad = log_ratio @ w.T
        # empty auxiliary letters: directional derivative is D(W_u || p_out)
        empty = pw <= 0
        if np.any(empty):
            grad[empty] = _divergences(w, po)[None, :]
    return info, grad


def _objective(joint, wv, wz, weight=1.0):
    iv, gv = _info_terms(joint, wv)
    iz, gz = _info_terms(joint, wz)
    return weight * iv - iz, weight * gv - gz


def _ascend(theta: np.ndarray, wv: np.ndarray, wz: np.ndarray, weight: float = 1.0) -> tuple[float, np.ndarray]:
    """Exponentiated-gradient ascent on the simplex with backtracking."""

    def joint_of(t):
        t = t - t.max()
        t = np.maximum(t, -700.0)
        e = np.exp(t)
        return e / e.sum()

    p = joint_of(theta)
    val, grad = _objective(p, wv, wz, weight)
    step = 1.0
    stall = 0
    for _ in range(ASCENT_MAX_ITER):
        improved = False
        for _ in range(40):
            cand_t = np.log(np.maximum(p, 1e-300)) + step * grad
            cand = joint_of(cand_t)
            cval, cgrad = _objective(cand, wv, wz, weight)
            if cval > val:
                improved = True
                break
            step *= 0.5
        if not improved:
            break
        gain = cval - val
        p, val, grad = cand, cval, cgrad
        step = min(step * 2.0, 1e3)
        stall = stall + 1 if gain < ASCENT_TOL else 0
        if stall >= 5:
            break
    return val, p


def _simplex_grid(dim: int, levels: int) -> np.ndarray:
    pts = [c for c in itertools.product(range(levels + 1), repeat=dim) if sum(c) == levels]
    return np.array(pts, dtype=np.float64) / levels


def _grid_seeds(u_size: int, aux_size: int, wv, wz, keep: int) -> list[np.ndarray]:
    if u_size > 3 or aux_size > 3:
        return []
    levels = 8 if u_size == 2 else 3
    rows = _simplex_grid(u_size, levels)
    weights = _simplex_grid(aux_size, levels)
    scored = []
    for pw in weights:
        for combo in itertools.product(range(len(rows)), repeat=aux_size):
            joint = pw[:, None] * rows[list(combo)]
            val, _ = _objective(joint, wv, wz)
            scored.append((-val, len(scored), joint))
    scored.sort(key=lambda t: (t[0], t[1]))
    return [j for _, _, j in scored[:keep]]


def _starts(w: WiretapKernel, aux_size: int, n_random: int, seed: int) -> list[np.ndarray]:
    wv, wz = marginal_v(w).rows, marginal_z(w).rows
    u = w.input_size
    _, cap_in = capacity(marginal_v(w))

    def as_aux(diag_joint):
        out = np.zeros((aux_size, u))
        out[: min(aux_size, u)] = diag_joint[: min(aux_size, u)]
        if aux_size < u:
            out[-1] += diag_joint[aux_size:].sum(axis=0)
        return out

    starts = [as_aux(np.diag(cap_in.probs)), as_aux(np.diag(np.full(u, 1.0 / u)))]
    starts += _grid_seeds(u, aux_size, wv, wz, keep=8)
    rng = np.random.default_rng(seed)
    for _ in range(n_random):
        starts.append(rng.dirichlet(np.ones(aux_size * u)).reshape(aux_size, u))
    return starts


def _to_theta(joint: np.ndarray) -> np.ndarray:
    return np.log(np.maximum(joint, 1e-12))


def secrecy_capacity(w: WiretapKernel, aux_size: int | None = None, starts: int = DEFAULT_STARTS,
                     seed: int = 0, workers: int = 1) -> tuple[float, AuxiliaryInput]:
    """Best value of max_{p(w,u)} I(W;V) - I(W;Z) found by multi-start ascent, in bits."""
    aux_size = w.input_size if aux_size is None else int(aux_size)
    if aux_size < 1:
        raise UsageError("aux_size must be >= 1")
    wv, wz = marginal_v(w).rows, marginal_z(w).rows
    seeds = _starts(w, aux_size, starts, seed)

    def run(joint):
        return _ascend(_to_theta(joint), wv, wz)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run, seeds))
    else:
        results = [run(j) for j in seeds]

    best_i, (best_val, best_joint) = 0, results[0]
    for i, (val, joint) in enumerate(results[1:], start=1):
        if val > best_val:
            best_i, best_val, best_joint = i, val, joint
    value = best_val / LN2
    c_main, _ = capacity(marginal_v(w))
    c_eaves, _ = capacity(marginal_z(w))
    if value < max(0.0, c_main - c_eaves) - 1e-9:
        raise ConsistencyError(f"secrecy ascent {value} below certified floor {c_main - c_eaves}")
    if value <= 0.0:
        flat = np.zeros((aux_size, w.input_size))
        flat[0] = 1.0 / w.input_size
        return 0.0, AuxiliaryInput(flat, start=-1, seed=seed)
    return float(value), AuxiliaryInput(best_joint, start=best_i, seed=seed)


def secrecy_pair(w: WiretapKernel, joint: np.ndarray) -> tuple[float, float]:
    """(I(W;V), I(W;Z)) in bits for a joint law p(w, u)."""
    wv, wz = marginal_v(w).rows, marginal_z(w).rows
    iv, _ = _info_terms(np.asarray(joint, float), wv)
    iz, _ = _info_terms(np.asarray(joint, float), wz)
    return iv / LN2, iz / LN2


# -- rate-leakage region --------------------------------------------------

def _lower_hull(points: np.ndarray) -> np.ndarray:
    pts = sorted({(float(x), float(y)) for x, y in points}, key=lambda t: (t[0], t[1]))
    hull: list[tuple[float, float]] = []
    for x, y in pts:
        if hull and hull[-1][0] == x:
            continue
        while len(hull) >= 2:
            (x1, y1), (x2, y2) = hull[-2], hull[-1]
            if (x2 - x1) * (y - y1) - (y2 - y1) * (x - x1) <= 0:
                hull.pop()
            else:
                break
        hull.append((x, y))
    return np.array(hull)


def rate_leakage_boundary(w: WiretapKernel, grid: int = 64, starts: int = DEFAULT_STARTS, seed: int = 0,
                          workers: int = 1):
    """Sample the minimal leakage rate R_L(R) and extract (C1, C2, ell).

    Every candidate law p(w, u) contributes the achievable pairs
    R <= I(W;V), R_L >= R - max(0, I(W;V) - I(W;Z)).  The required leakage
    is the lower convex envelope of the candidates' corner points (time
    sharing), so ell is the chord slope from (C1, 0) to the point at C2.
    Returns ``(points, summary)`` with ``points`` a list of (R, R_L).
    """
    if grid < 16:
        raise UsageError("grid must be >= 16")
    u = w.input_size
    main = marginal_v(w)
    wv, wz = main.rows, marginal_z(w).rows
    C, cap_in = capacity(main)
    c_wt, aux = secrecy_capacity(w, aux_size=u, starts=starts, seed=seed, workers=workers)

    p_cap = np.diag(cap_in.probs)
    p_sec = aux.joint
    cands = [p_sec, p_cap]
    for t in np.linspace(0.0, 1.0, grid)[1:-1]:
        cands.append((1 - t) * p_sec + t * p_cap)
    for mu in np.geomspace(0.05, 20.0, 8):
        for base in (p_sec, p_cap):
            cands.append(_ascend(_to_theta(base), wv, wz, weight=1.0 + mu)[1])
    if u <= 3:
        for pu in _simplex_grid(u, 8 if u == 2 else 6):
            cands.append(np.diag(pu))

    pairs = np.array([secrecy_pair(w, j) for j in cands])
    a = pairs[:, 0]
    b = np.maximum(0.0, pairs[:, 0] - pairs[:, 1])
    # the capacity-achieving law attains C exactly; ascent values are not larger
    a[1] = C
    C2 = float(a.max())
    C1 = float(max(b.max(), c_wt))
    b[0] = max(b[0], c_wt)
    flags = []
    if C2 <= 1e-12:
        summary = ChannelSummary(C, c_wt, 0.0, 0.0, 1.0, cap_in, aux, ("degenerate",), ())
        return [(0.0, 0.0)], summary

    corners = np.concatenate([np.column_stack([b, np.zeros_like(b)]), np.column_stack([a, a - b]),
                              [[0.0, 0.0]]])
    hull = _lower_hull(corners)
    hull = hull[hull[:, 0] <= C2]
    rs = np.linspace(0.0, C2, grid)
    rl = np.interp(rs, hull[:, 0], hull[:, 1])
    rl = np.maximum.accumulate(np.maximum(rl, 0.0))
    points = [(float(r), float(x)) for r, x in zip(rs, rl)]

    if C2 - C1 <= 1e-9:
        flags.append("no_leakage_tradeoff")
        C1 = C2
        ell = 1.0
    else:
        at_c2 = float(np.interp(C2, hull[:, 0], hull[:, 1]))
        ell = max(1.0, at_c2 / (C2 - C1))
        seg = (rs >= C1) & (rs <= C2)
        chord = ell * (rs[seg] - C1)
        if np.max(np.abs(rl[seg] - chord)) <= LINEAR_TOL:
            flags.append("boundary_linear")
    summary = ChannelSummary(C, c_wt, C1, C2, float(ell), cap_in, aux, tuple(flags), tuple(points))
    return points, summary


# -- pre-coding -----------------------------------------------------------

def _check_message(x, n_bits: int, what: str) -> None:
    if n_bits < 0:
        raise UsageError("n_bits must be non-negative")
    a = np.asarray(x)
    if a.dtype.kind not in "iu":
        raise UsageError(f"{what} must be an integer")
    if np.any(a < 0) or np.any(a >= (1 << n_bits)):
        raise UsageError(f"{what}={x} outside [0, 2^{n_bits})")


def precode(m, q, n_bits: int):
    """m' = (m + q) mod 2^n_bits; accepts ints or integer arrays."""
    _check_message(m, n_bits, "m")
    _check_message(q, n_bits, "q")
    return (m + q) % (1 << n_bits)


def precode_inverse(m_prime, q, n_bits: int):
    _check_message(m_prime, n_bits, "m'")
    _check_message(q, n_bits, "q")
    return (m_prime - q) % (1 << n_bits)


def precoded_distribution(message: Pmf, key: Pmf | None = None) -> np.ndarray:
    """Exact law of (M + Q) mod N for independent M and Q (Q uniform by default)."""
    n = message.alphabet_size
    if n & (n - 1):
        raise UsageError("message alphabet size must be a power of two")
    q = np.full(n, 1.0 / n) if key is None else key.probs
    if q.size != n:
        raise UsageError("key and message alphabets differ")
    out = np.zeros(n)
    for shift in range(n):
        out += q[shift] * np.roll(message.probs, shift)
    return out
