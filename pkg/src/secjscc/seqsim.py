"""Exact simulation of small sequential source-channel codes over a wiretap channel.

A code splits the source into k blocks of n letters.  Encoder i sees the
first i*n letters and emits ``m_i - m_{i-1}`` channel inputs; one decoder
maps the whole legitimate output to nk reconstructions.  ``run_exact``
enumerates every source string, so distortion and the prefix leakages
I(X^{in}; Z^{m_i}) are exact rather than estimated.

Sequences are indexed big-endian: letter 0 is the most significant digit.
"""

from __future__ import annotations

import csv
import json
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .bounds import BlockSchedule
from .cumfn import CumulativeFn, require_regular
from .errors import FeasibilityError, UsageError, ValidationError
from .probkit import Dmc, JointDist, WiretapKernel, marginal_v, marginal_z, mutual_information
from .rdtool import SourceSpec, distortion_at_rate
from .wiretap import capacity

MAX_CELLS = 2**24
CHUNK_ROWS = 256  # fixed partition of source strings, independent of worker count
MONOTONE_TOL = 1e-10
QUANTIZE = "quantize-and-index"
REPEAT = "repeat"
NULL = "null"


class DegenerateCodeWarning(UserWarning):
    pass


def _digits(count: int, base: int, length: int) -> np.ndarray:
    """Row j holds the base-``base`` digits of j, most significant first."""
    idx = np.arange(count, dtype=np.int64)
    out = np.empty((count, length), dtype=np.int64)
    for t in range(length - 1, -1, -1):
        out[:, t] = idx % base
        idx //= base
    return out


@dataclass(frozen=True, eq=False)
class SequentialCode:
    schedule: BlockSchedule
    x_size: int
    u_size: int
    v_size: int
    xhat_size: int
    encoders: tuple  # encoders[i-1]: int array (x_size**(i*n), m_i - m_{i-1})
    decoder: np.ndarray  # int array (v_size**m_k, n*k)

    def __post_init__(self):
        s = self.schedule
        if len(self.encoders) != s.k:
            raise ValidationError(f"{len(self.encoders)} encoders for k={s.k}")
        encs = []
        for i, (e, length) in enumerate(zip(self.encoders, s.block_lengths()), start=1):
            e = np.array(e, dtype=np.int64).reshape(self.x_size ** (i * s.n), length)
            if e.size and (e.min() < 0 or e.max() >= self.u_size):
                raise ValidationError(f"encoder {i} emits symbols outside the input alphabet")
            e.setflags(write=False)
            encs.append(e)
        d = np.array(self.decoder, dtype=np.int64)
        want = (self.v_size ** s.m[-1], s.n * s.k)
        if d.shape != want:
            raise ValidationError(f"decoder table has shape {d.shape}, expected {want}")
        if d.size and (d.min() < 0 or d.max() >= self.xhat_size):
            raise ValidationError("decoder emits letters outside the reconstruction alphabet")
        d.setflags(write=False)
        object.__setattr__(self, "encoders", tuple(encs))
        object.__setattr__(self, "decoder", d)

    @property
    def k(self) -> int:
        return self.schedule.k

    @property
    def n(self) -> int:
        return self.schedule.n

    def channel_inputs(self, x_index: np.ndarray) -> np.ndarray:
        """U^{m_k} for each source string index in ``x_index``."""
        k, n = self.k, self.n
        parts = []
        for i, enc in enumerate(self.encoders, start=1):
            prefix = x_index // self.x_size ** (n * (k - i))
            parts.append(enc[prefix])
        return np.concatenate(parts, axis=1) if parts else np.zeros((x_index.size, 0), np.int64)

    def to_dict(self) -> dict:
        s = self.schedule
        return {"k": s.k, "n": s.n, "r": list(s.r), "m": list(s.m),
                "alphabets": {"x": self.x_size, "u": self.u_size, "v": self.v_size, "xhat": self.xhat_size},
                "encoders": [e.tolist() for e in self.encoders], "decoder": self.decoder.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "SequentialCode":
        sched = BlockSchedule.from_rates(d["r"], d["n"]) if "r" in d else None
        if sched is None or ("m" in d and list(sched.m) != list(d["m"])):
            m = list(d["m"])
            sched = BlockSchedule(d["k"], d["n"], tuple(d.get("r", [0.0] * d["k"])), tuple(m))
        a = d["alphabets"]
        return cls(sched, a["x"], a["u"], a["v"], a["xhat"], tuple(d["encoders"]), d["decoder"])


# -- built-in codes -------------------------------------------------------

def _ml_symbols(main: Dmc) -> np.ndarray:
    """argmax_u p(v|u) for every v, ties to the lowest u."""
    return np.argmax(main.rows, axis=0)


def _groups(n: int, length: int) -> list[np.ndarray]:
    """Split positions 0..n-1 into ``length`` contiguous near-equal groups."""
    return [g for g in np.array_split(np.arange(n), length)]


def _best_letter(d: np.ndarray, letters: np.ndarray) -> int:
    """Reconstruction minimizing total distortion to ``letters``; ties favour the first letter's best match."""
    cost = d[letters].sum(axis=0)
    best = np.flatnonzero(cost == cost.min())
    own = int(np.argmin(d[letters[0]]))
    return own if own in best else int(best[0])


def builtin_code(kind: str, source: SourceSpec, w: WiretapKernel, G: CumulativeFn, k: int, n: int) -> SequentialCode:
    """Concrete encoder and decoder tables for a schedule derived from G."""
    sched = BlockSchedule.from_crdf(G, k, n)
    xs, us = source.px.alphabet_size, w.input_size
    vs, xh = w.legit_size, source.distortion.shape[1]
    d = source.distortion
    lengths = sched.block_lengths()
    mk = sched.m[-1]
    if xs ** (n * k) * max(vs ** mk, 1) > MAX_CELLS:
        raise FeasibilityError(f"decoder table would need {xs ** (n * k)} x {vs ** mk} cells")
    const = source.best_constant()
    if kind not in (QUANTIZE, REPEAT, NULL):
        raise UsageError(f"unknown code kind {kind!r}")
    if kind != NULL and (mk == 0 or us < 2):
        warnings.warn(f"{kind}: channel budget carries fewer than 2 codewords; using a constant encoder",
                      DegenerateCodeWarning, stacklevel=2)
        kind = NULL
    if kind == NULL:
        encs = tuple(np.zeros((xs ** (i * n), lengths[i - 1]), np.int64) for i in range(1, k + 1))
        dec = np.full((vs ** mk, n * k), const, np.int64)
        return SequentialCode(sched, xs, us, vs, xh, encs, dec)

    ml = _ml_symbols(marginal_v(w))
    vdig = _digits(vs ** mk, vs, mk)
    uhat = ml[vdig] if mk else vdig
    dec = np.full((vs ** mk, n * k), const, np.int64)
    encs = []
    for i in range(1, k + 1):
        length = lengths[i - 1]
        lo = sched.m[i - 1]
        xdig = _digits(xs ** (i * n), xs, i * n)[:, (i - 1) * n:]
        enc = np.zeros((xdig.shape[0], length), np.int64)
        if length == 0:
            encs.append(enc)
            continue
        if kind == QUANTIZE:
            if xh > us:
                raise UsageError(f"quantize-and-index needs |Xhat|={xh} <= |U|={us}")
            groups = _groups(n, min(length, n))
            for row, letters in enumerate(xdig):
                for t, g in enumerate(groups):
                    enc[row, t] = _best_letter(d, letters[g])
            # spare channel symbols repeat the group indices cyclically
            for t in range(len(groups), length):
                enc[:, t] = enc[:, t % len(groups)]
            for t, g in enumerate(groups):
                cols = uhat[:, lo + t:lo + length:len(groups)]
                dec[:, (i - 1) * n + g] = _vote(cols, xh)[:, None]
        else:
            if xs > us:
                raise UsageError(f"repeat needs |X|={xs} <= |U|={us}")
            for t in range(length):
                enc[:, t] = xdig[:, t % n]
            to_xhat = np.argmin(d, axis=1)
            for j in range(min(n, length)):
                cols = uhat[:, lo + j:lo + length:n]
                dec[:, (i - 1) * n + j] = to_xhat[np.minimum(_vote(cols, xs), xs - 1)]
        encs.append(enc)
    return SequentialCode(sched, xs, us, vs, xh, tuple(encs), dec)


def _vote(cols: np.ndarray, size: int) -> np.ndarray:
    """Most frequent symbol per row, ties to the lowest symbol."""
    counts = np.zeros((cols.shape[0], max(size, int(cols.max()) + 1 if cols.size else 1)), np.int64)
    for c in cols.T:
        counts[np.arange(cols.shape[0]), c] += 1
    return np.argmax(counts, axis=1)


# -- exact evaluation -----------------------------------------------------

@dataclass(frozen=True)
class Violation:
    constraint: str  # "distortion" or "leakage"
    block: int  # 0 for the distortion constraint
    margin: float  # observed minus allowed, > 0

    def to_dict(self) -> dict:
        return {"constraint": self.constraint, "block": self.block, "margin": self.margin}


@dataclass(frozen=True)
class AuditReport:
    expected_distortion: float
    leakage: tuple  # bits per source symbol, (1/nk) I(X^{in}; Z^{m_i})
    leakage_limits: tuple  # L(i/k)
    d_bar: float
    violations: tuple
    delivered_rate: float  # m_k * C / (nk)
    distortion_floor: float  # D(delivered_rate)
    k: int
    n: int
    m: tuple = field(default=())

    @property
    def ok(self) -> bool:
        return not self.violations

    def to_dict(self) -> dict:
        return {"expected_distortion": self.expected_distortion, "d_bar": self.d_bar,
                "leakage": list(self.leakage), "leakage_limits": [_jf(x) for x in self.leakage_limits],
                "violations": [v.to_dict() for v in self.violations],
                "delivered_rate": self.delivered_rate, "distortion_floor": self.distortion_floor,
                "k": self.k, "n": self.n, "m": list(self.m)}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["i", "leakage", "L"])
            for i, (a, b) in enumerate(zip(self.leakage, self.leakage_limits), start=1):
                wr.writerow([i, repr(a), repr(b)])


def _jf(x: float):
    return float(x) if math.isfinite(x) else "inf"


def _output_law(u: np.ndarray, rows: np.ndarray) -> np.ndarray:
    """p(y^m | u^m) for each row of ``u``, y indexed big-endian."""
    out = np.ones((u.shape[0], 1))
    for t in range(u.shape[1]):
        out = (out[:, :, None] * rows[u[:, t]][:, None, :]).reshape(u.shape[0], -1)
    return out


def _chunk_terms(code: SequentialCode, px_seq: np.ndarray, xdig: np.ndarray, d: np.ndarray,
                 wv: np.ndarray, wz: np.ndarray, rows: np.ndarray):
    """Distortion sum and per-block (x^{in}, z^{m_i}) tables for one slice of source strings."""
    u = code.channel_inputs(rows)
    p = px_seq[rows]
    xhat = code.decoder
    dist = np.zeros((rows.size, xhat.shape[0]))
    for t in range(xhat.shape[1]):
        dist += d[xdig[rows, t][:, None], xhat[:, t][None, :]]
    pv = _output_law(u, wv)
    # forbidden reconstructions only count when they can occur
    ed = float(np.sum(np.where(pv > 0, p[:, None] * pv * dist, 0.0))) / xhat.shape[1]
    k, n, xs = code.k, code.n, code.x_size
    tables = []
    for i in range(1, k + 1):
        mi = code.schedule.m[i]
        pz = _output_law(u[:, :mi], wz) * p[:, None]
        prefix = rows // xs ** (n * (k - i))
        t = np.zeros((xs ** (n * i), pz.shape[1]))
        np.add.at(t, prefix, pz)
        tables.append(t)
    return ed, tables


def _check_schedule(code: SequentialCode, G: CumulativeFn) -> None:
    want = BlockSchedule.from_crdf(G, code.k, code.n)
    if tuple(want.m) != tuple(code.schedule.m):
        raise ValidationError(f"code schedule m={list(code.schedule.m)} does not match G (m={list(want.m)})")


def run_exact(code: SequentialCode, source: SourceSpec, w: WiretapKernel, G: CumulativeFn,
              L: CumulativeFn, d_bar: float, workers: int = 1, tol: float = 1e-12) -> AuditReport:
    """Exact expected distortion and prefix leakages, audited against d_bar and L."""
    require_regular(G, "G")
    require_regular(L, "L")
    _check_schedule(code, G)
    if code.x_size != source.px.alphabet_size or code.u_size != w.input_size or code.v_size != w.legit_size:
        raise ValidationError("code alphabets do not match the source and channel")
    k, n, mk = code.k, code.n, code.schedule.m[-1]
    nx = code.x_size ** (n * k)
    for name, size in (("Z", w.eaves_size), ("V", w.legit_size)):
        cells = nx * size ** mk
        if cells > MAX_CELLS:
            need = math.ceil(math.log2(cells / MAX_CELLS))
            raise FeasibilityError(f"|X|^nk x |{name}|^m_k = {cells} cells exceeds {MAX_CELLS}; "
                                   f"shrink the instance by about {need} bits (smaller n, k or budget)")
    xdig = _digits(nx, code.x_size, n * k)
    px_seq = np.prod(source.px.probs[xdig], axis=1) if n * k else np.ones(1)
    wv, wz = marginal_v(w).rows, marginal_z(w).rows
    chunks = [np.arange(a, min(a + CHUNK_ROWS, nx)) for a in range(0, nx, CHUNK_ROWS)]
    job = lambda rows: _chunk_terms(code, px_seq, xdig, source.distortion, wv, wz, rows)
    if workers > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(job, chunks))
    else:
        parts = [job(c) for c in chunks]
    ed = math.fsum(p[0] for p in parts)
    tables = [sum((p[1][i] for p in parts[1:]), parts[0][1][i].copy()) for i in range(k)]

    leak = []
    for i, t in enumerate(tables, start=1):
        if code.schedule.m[i] == 0:
            leak.append(0.0)
            continue
        jd = JointDist(t, ("X", "Z"), max_cells=MAX_CELLS)
        leak.append(mutual_information(jd, ["X"], ["Z"]) / (n * k))
    limits = tuple(float(L(i / k)) for i in range(1, k + 1))

    viol = []
    if ed > d_bar + tol:
        viol.append(Violation("distortion", 0, ed - d_bar))
    for i, (a, b) in enumerate(zip(leak, limits), start=1):
        if a > b + tol:
            viol.append(Violation("leakage", i, a - b))
    c_main = capacity(marginal_v(w))[0] if mk else 0.0
    rate = mk * c_main / (n * k)
    floor = distortion_at_rate(source, rate)
    return AuditReport(ed, tuple(leak), limits, float(d_bar), tuple(viol), rate, floor, k, n, tuple(code.schedule.m))


def audit_monotone_leakage(report: AuditReport, tol: float = MONOTONE_TOL):
    """``None`` when nk * leakage_i is non-decreasing, else the first offending block."""
    scale = report.n * report.k
    for i in range(1, len(report.leakage)):
        if scale * report.leakage[i] < scale * report.leakage[i - 1] - tol:
            return Violation("leakage-monotonicity", i + 1, scale * (report.leakage[i - 1] - report.leakage[i]))
    return None


def converse_holds(report: AuditReport, tol: float = 1e-9) -> bool:
    """No code beats the distortion-rate function at the rate it can deliver."""
    return report.expected_distortion >= report.distortion_floor - tol


def sample_distortion(code: SequentialCode, source: SourceSpec, w: WiretapKernel,
                      samples: int, seed: int = 0) -> float:
    """Monte-Carlo estimate of the expected distortion (no leakage)."""
    rng = np.random.default_rng(seed)
    nk = code.n * code.k
    xs = rng.choice(code.x_size, size=(samples, nk), p=source.px.probs)
    weights = code.x_size ** np.arange(nk - 1, -1, -1, dtype=np.int64)
    x_index = xs @ weights
    u = code.channel_inputs(x_index)
    wv = marginal_v(w).rows
    cdf = np.cumsum(wv, axis=1)
    draws = rng.random(u.shape)
    v = np.minimum((draws[..., None] > cdf[u]).sum(axis=-1), wv.shape[1] - 1)
    mk = u.shape[1]
    v_index = v @ (code.v_size ** np.arange(mk - 1, -1, -1, dtype=np.int64)) if mk else np.zeros(samples, np.int64)
    xhat = code.decoder[v_index]
    return float(source.distortion[xs, xhat].mean())
