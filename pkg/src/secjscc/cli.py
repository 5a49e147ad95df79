"""Command-line front end: one JSON config in, one result JSON (plus CSV tables) out.

Exit status: 0 success, 1 constraint violation or infeasible computation,
2 malformed config or arguments.
"""

from __future__ import annotations

import argparse
import datetime
import json
import math
import sys
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

from . import __version__, bounds, cumfn, seqsim, wiretap
from .errors import ConsistencyError, InfeasibleError, UsageError, ValidationError
from .probkit import Dmc, WiretapKernel, marginal_v
from .rdtool import SourceSpec, curve_for

COMMANDS = ("capacity", "secrecy", "rd", "effective", "reshape", "simulate")


class ConfigError(Exception):
    def __init__(self, path: str, msg: str):
        super().__init__(f"config error at {path}: {msg}")
        self.path = path


# -- config parsing -------------------------------------------------------

def _need(cfg: dict, key: str, path: str = ""):
    where = f"{path}.{key}" if path else key
    if not isinstance(cfg, dict) or key not in cfg:
        raise ConfigError(where, "missing")
    return cfg[key]


def _number(value, path: str) -> float:
    if isinstance(value, str) and value.lower() in ("inf", "infinity"):
        return math.inf
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(path, f"expected a number, got {value!r}")
    return float(value)


def _array(value, path: str, ndim: int | None = None) -> np.ndarray:
    try:
        arr = np.array(value, dtype=np.float64)
    except (TypeError, ValueError) as exc:
        raise ConfigError(path, f"not a numeric array ({exc})") from None
    if ndim is not None and arr.ndim != ndim:
        raise ConfigError(path, f"expected a {ndim}-D array, got {arr.ndim}-D")
    return arr


def _build(path: str, fn, *args):
    try:
        return fn(*args)
    except (ValidationError, UsageError) as exc:
        raise ConfigError(path, str(exc)) from None


def parse_source(cfg: dict) -> SourceSpec:
    s = _need(cfg, "source")
    if isinstance(s, dict) and "bernoulli" in s:
        p = _number(s["bernoulli"], "source.bernoulli")
        return _build("source.bernoulli", SourceSpec.binary_hamming, p)
    px = _array(_need(s, "px", "source"), "source.px", 1)
    d = _array([[_number(x, "source.distortion") for x in row] for row in _need(s, "distortion", "source")],
               "source.distortion", 2)
    return _build("source", SourceSpec, px, d)


def parse_channel(cfg: dict, wiretap_needed: bool):
    ch = _need(cfg, "channel")
    if isinstance(ch, dict):
        main = _build("channel.main", Dmc, _array(_need(ch, "main", "channel"), "channel.main", 2))
        if "eavesdropper" not in ch:
            if wiretap_needed:
                raise ConfigError("channel.eavesdropper", "missing")
            return main
        eaves = _build("channel.eavesdropper", Dmc, _array(ch["eavesdropper"], "channel.eavesdropper", 2))
        structure = ch.get("structure", "independent")
        if structure == "degraded":
            return _build("channel", WiretapKernel.from_cascade, main, eaves)
        if structure == "independent":
            return _build("channel", WiretapKernel.from_marginals, main, eaves)
        raise ConfigError("channel.structure", f"unknown structure {structure!r} (degraded|independent)")
    arr = _array(ch, "channel")
    if arr.ndim == 2:
        if wiretap_needed:
            raise ConfigError("channel", "a wiretap kernel (3-D array or main/eavesdropper) is required")
        return _build("channel", Dmc, arr)
    if arr.ndim == 3:
        return _build("channel", WiretapKernel, arr)
    raise ConfigError("channel", f"expected a 2-D or 3-D array, got {arr.ndim}-D")


def parse_cumulative(cfg: dict, key: str) -> cumfn.CumulativeFn:
    f = _need(cfg, key)
    if isinstance(f, dict) and "rates" in f:
        return _build(f"{key}.rates", cumfn.step_from_rates, _array(f["rates"], f"{key}.rates", 1))
    bp = _array(_need(f, "breakpoints", key), f"{key}.breakpoints", 1)
    vals = [_number(x, f"{key}.values") for x in _need(f, "values", key)]
    kind = f.get("kind", cumfn.STEP)
    if kind not in cumfn.KINDS:
        raise ConfigError(f"{key}.kind", f"unknown kind {kind!r}")
    fn = _build(key, cumfn.CumulativeFn, bp, vals, kind)
    bad = cumfn.validate_regular(fn)
    if bad is not None:
        raise ConfigError(key, f"not a regular cumulative function: {bad}")
    return fn


def _int(cfg: dict, key: str, default=None, minimum: int = 1) -> int:
    if key not in cfg:
        if default is None:
            raise ConfigError(key, "missing")
        return default
    v = cfg[key]
    if isinstance(v, bool) or not isinstance(v, int) or v < minimum:
        raise ConfigError(key, f"expected an integer >= {minimum}, got {v!r}")
    return v


# -- commands -------------------------------------------------------------

def _csv_path(out: Path, tag: str) -> Path:
    return out.with_name(f"{out.stem}.{tag}.csv")


def cmd_capacity(cfg, args, out):
    ch = parse_channel(cfg, wiretap_needed=False)
    if isinstance(ch, WiretapKernel):
        ch = marginal_v(ch)
    c, p = wiretap.capacity(ch)
    return {"command": "capacity", "C": c, "input": p.probs.tolist()}, f"C = {c:.12g} bits/use", 0


def cmd_secrecy(cfg, args, out):
    w = parse_channel(cfg, wiretap_needed=True)
    starts = _int(cfg, "starts", wiretap.DEFAULT_STARTS)
    points, summary = wiretap.rate_leakage_boundary(w, grid=args.grid or 64, starts=starts,
                                                     seed=args.seed, workers=args.workers)
    path = _csv_path(out, "boundary")
    with open(path, "w") as fh:
        fh.write("R,R_L\n")
        for r, rl in points:
            fh.write(f"{r!r},{rl!r}\n")
    res = {"command": "secrecy", "C_WT": summary.C_WT, "summary": summary.to_dict(),
           "boundary_csv": path.name}
    return res, f"C_WT = {summary.C_WT:.12g}, C = {summary.C:.12g}, ell = {summary.ell:.6g}", 0


def cmd_rd(cfg, args, out):
    src = parse_source(cfg)
    curve = curve_for(src)
    res = {"command": "rd", "d_min": curve.d_min, "d_max": curve.d_max, "R_at_d_min": curve.rate_at_dmin()}
    if "D" in cfg:
        ds = [_number(x, "D") for x in cfg["D"]]
        res["rate_at"] = [{"D": d, "R": curve.rate(d)} for d in ds]
    if "R" in cfg:
        rs = [_number(x, "R") for x in cfg["R"]]
        res["distortion_at"] = [{"R": r, "D": curve.distortion(r)} for r in rs]
    path = _csv_path(out, "rd")
    curve.to_csv(path, args.grid)
    res["curve_csv"] = path.name
    return res, f"R(d_min) = {res['R_at_d_min']:.12g}, d_max = {curve.d_max:.12g}", 0


def _channel_params(cfg, args, kind):
    keys = ("C1", "C2", "ell") if kind == bounds.INNER else ("C", "C_WT")
    if all(k in cfg for k in keys):
        return {k: _number(cfg[k], k) for k in keys}
    if "channel" not in cfg:
        raise ConfigError(keys[0], f"give {', '.join(keys)} or a wiretap channel")
    w = parse_channel(cfg, wiretap_needed=True)
    _, s = wiretap.rate_leakage_boundary(w, grid=64, starts=_int(cfg, "starts", wiretap.DEFAULT_STARTS),
                                         seed=args.seed, workers=args.workers)
    return {"C": s.C, "C_WT": s.C_WT, "C1": s.C1, "C2": s.C2, "ell": s.ell}


def cmd_effective(cfg, args, out):
    kind = args.kind or cfg.get("kind", bounds.OUTER)
    if kind not in (bounds.OUTER, bounds.INNER, bounds.DISCRETIZED):
        raise ConfigError("kind", f"unknown kind {kind!r}")
    G, L = parse_cumulative(cfg, "G"), parse_cumulative(cfg, "L")
    k = args.k if args.k is not None else (_int(cfg, "k") if "k" in cfg else None)
    p = _channel_params(cfg, args, kind)
    try:
        if kind == bounds.OUTER:
            prof = bounds.effective_out(G, L, p["C"], p["C_WT"])
        elif kind == bounds.INNER:
            prof = bounds.effective_in(G, L, p["C1"], p["C2"], p["ell"])
        else:
            if k is None:
                raise ConfigError("k", "required for the discretized kind")
            prof = bounds.discretize_effective(G, L, p["C"], p["C_WT"], k)
    except (UsageError, ValidationError) as exc:
        raise ConfigError("G/L/params", str(exc)) from None
    res = {"command": "effective", **prof.to_dict(), "distortion_bound": None, "block_plan": None}
    if "source" in cfg:
        res["distortion_bound"] = bounds.distortion_bound(prof, parse_source(cfg))
    if k is not None:
        res["block_plan"] = bounds.block_rate_plan(prof, k).to_dict()
    status = 0
    if "d_bar" in cfg and res["distortion_bound"] is not None:
        d_bar = _number(cfg["d_bar"], "d_bar")
        res["d_bar"] = d_bar
        res["meets_d_bar"] = res["distortion_bound"] <= d_bar
    path = _csv_path(out, "profile")
    prof.to_csv(path, args.grid or 101)
    res["profile_csv"] = path.name
    return res, f"{kind}: penalty = {prof.penalty_constant:.12g}, raw(1) = {prof.raw(1.0):.12g}", status


def cmd_reshape(cfg, args, out):
    rates = [_number(x, "rates") for x in _need(cfg, "rates")]
    target = _number(_need(cfg, "target_total"), "target_total")
    rv = _build("rates", bounds.RateVector.of, rates)
    got = bounds.reshape_rates(rv, target)
    res = {"command": "reshape", "input": list(rv.entries), "target_total": target, "output": list(got.entries)}
    return res, "reshaped: " + ", ".join(f"{x:.6g}" for x in got.entries), 0


def _parse_code(cfg, src, w, G, k, n):
    code_cfg = cfg.get("code", {"kind": seqsim.QUANTIZE})
    if "encoders" in code_cfg:
        return _build("code", seqsim.SequentialCode.from_dict, {"k": k, "n": n, **code_cfg})
    kind = code_cfg.get("kind", seqsim.QUANTIZE)
    try:
        return seqsim.builtin_code(kind, src, w, G, k, n)
    except UsageError as exc:
        raise ConfigError("code.kind", str(exc)) from None


def cmd_simulate(cfg, args, out):
    src = parse_source(cfg)
    w = parse_channel(cfg, wiretap_needed=True)
    G, L = parse_cumulative(cfg, "G"), parse_cumulative(cfg, "L")
    k = args.k if args.k is not None else _int(cfg, "k")
    n = _int(cfg, "n")
    d_bar = _number(_need(cfg, "d_bar"), "d_bar")
    code = _parse_code(cfg, src, w, G, k, n)
    try:
        report = seqsim.run_exact(code, src, w, G, L, d_bar, workers=args.workers)
    except ValidationError as exc:
        raise ConfigError("code", str(exc)) from None
    res = {"command": "simulate", **report.to_dict(),
           "monotone_leakage": seqsim.audit_monotone_leakage(report) is None,
           "converse_holds": seqsim.converse_holds(report)}
    if "mc_samples" in cfg:
        res["sampled_distortion"] = seqsim.sample_distortion(code, src, w, _int(cfg, "mc_samples"), args.seed)
    path = _csv_path(out, "leakage")
    report.to_csv(path)
    res["leakage_csv"] = path.name
    status = 1 if report.violations else 0
    msg = f"E d = {report.expected_distortion:.12g}, {len(report.violations)} violation(s)"
    return res, msg, status


HANDLERS = {name: globals()[f"cmd_{name}"] for name in COMMANDS}


# -- output ---------------------------------------------------------------

def _schema() -> dict:
    return json.loads(resources.files("secjscc").joinpath("result_schema.json").read_text())


def _clean(obj):
    if isinstance(obj, float):
        return obj if math.isfinite(obj) else ("inf" if obj > 0 else "-inf")
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.generic):
        return _clean(obj.item())
    return obj


def dump_result(result: dict) -> str:
    return json.dumps(_clean(result), indent=2, sort_keys=True) + "\n"


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="secjscc", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, type=Path)
        p.add_argument("--out", required=True, type=Path)
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--grid", type=int, default=None)
        p.add_argument("--workers", type=int, default=1)
        if name in ("effective", "simulate"):
            p.add_argument("--k", type=int, default=None)
        else:
            p.set_defaults(k=None)
        if name == "effective":
            p.add_argument("--kind", choices=(bounds.OUTER, bounds.INNER, bounds.DISCRETIZED), default=None)
        else:
            p.set_defaults(kind=None)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if args.workers < 1 or (args.grid is not None and args.grid < 2) or (args.k is not None and args.k < 1):
        print("error: --workers, --grid and --k must be positive", file=sys.stderr)
        return 2
    try:
        cfg = json.loads(args.config.read_text())
    except OSError as exc:
        print(f"error: cannot read config: {exc}", file=sys.stderr)
        return 2
    except json.JSONDecodeError as exc:
        print(f"error: config is not valid JSON: {exc}", file=sys.stderr)
        return 2
    if not isinstance(cfg, dict):
        print("config error at <root>: expected a JSON object", file=sys.stderr)
        return 2
    args.out.parent.mkdir(parents=True, exist_ok=True)
    try:
        result, summary, status = HANDLERS[args.command](cfg, args, args.out)
    except ConfigError as exc:
        print(str(exc), file=sys.stderr)
        return 2
    except (InfeasibleError, ConsistencyError) as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return 1
    except (UsageError, ValidationError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    text = dump_result(result)
    jsonschema.validate(json.loads(text), _schema())
    args.out.write_text(text)
    meta = {"version": __version__, "command": args.command, "config": str(args.config), "seed": args.seed,
            "workers": args.workers, "created": datetime.datetime.now(datetime.timezone.utc).isoformat()}
    args.out.with_name(args.out.name + ".meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    print(f"{args.command}: {summary}")
    return status


if __name__ == "__main__":
    sys.exit(main())
