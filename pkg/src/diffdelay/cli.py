"""Command-line front end.

Every subcommand reads a JSON system spec and prints a JSON report
(sorted keys) on stdout or to ``--report``.  Exit status is 0 whenever the
analysis completes, whatever the verdict, and 2 on input errors.
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import math
import sys
import time
from enum import Enum
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import __version__
from ._exact import to_fraction
from .core import DelaySystem, ValidationError, commensurability, load_spec
from .frequency import (FrequencyConfig, approx_verdict, ck_certificate,
                        exact_necessary_verdict, margin_heatmap, strip_bounds)
from .time_domain import AnalysisConfig, GridError, SampledSignal, WindowError, range_saturation_check, simulate


class InputError(Exception):
    """Bad command-line input; reported with exit status 2."""


def to_jsonable(obj):
    """Recursively convert results to JSON-compatible values."""
    if isinstance(obj, Enum):
        return obj.value
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        return {f.name: to_jsonable(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, Fraction):
        return str(obj)
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (complex, np.complexfloating)):
        return {"re": to_jsonable(obj.real), "im": to_jsonable(obj.imag)}
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else str(x)
    if obj is None or isinstance(obj, str):
        return obj
    return repr(obj)


def _emit(report: dict, args) -> None:
    text = json.dumps(to_jsonable(report), sort_keys=True, indent=2) + "\n"
    if args.report:
        Path(args.report).write_text(text)
    else:
        sys.stdout.write(text)


def _base(system: DelaySystem, command: str, config: dict) -> dict:
    return {"tool": "diffdelay", "version": __version__, "command": command,
            "system": system.to_dict(), "config": config}


def _write_csv(path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for r in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in r])


def _freq_config(args) -> FrequencyConfig:
    return FrequencyConfig(grid_sigma=args.grid_sigma, grid_phase=args.grid_phase, strip_pad=args.strip_pad)


# -- subcommands ---------------------------------------------------------------

def _read_signal(path, a, b, h, dim, name) -> SampledSignal:
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    if data.shape[1] != dim + 1:
        raise InputError(f"{name} CSV needs a time column and {dim} value columns")
    sig = SampledSignal(float(data[0, 0]), float(data[-1, 0]), float(h), data[:, 1:])
    if abs(sig.a - a) > 1e-9 or abs(sig.b - b) > 1e-9:
        raise InputError(f"{name} must be sampled on [{a}, {b}]")
    return sig


def cmd_simulate(system: DelaySystem, args) -> dict:
    h = to_fraction(args.h)
    T = to_fraction(args.T)
    LN = float(system.exact_delays[-1] if system.exact_delays[-1] is not None else system.max_delay)
    if args.x0:
        x0 = _read_signal(args.x0, -LN, 0.0, h, system.d, "x0")
    else:
        x0 = SampledSignal.constant(args.x0_const or [0.0] * system.d, -LN, 0.0, float(h))
    if args.u:
        u = _read_signal(args.u, 0.0, float(T), h, system.m, "u")
    else:
        u = SampledSignal.constant(args.u_const or [0.0] * system.m, 0.0, float(T), float(h))
    if x0.dim != system.d or u.dim != system.m:
        raise InputError("constant signal dimensions do not match the system")
    sol = simulate(system, x0, u, approximate=args.approximate)
    if args.out:
        _write_csv(args.out, ["t"] + [f"x{i + 1}" for i in range(system.d)],
                   [[t, *row] for t, row in zip(sol.times, sol.samples)])
    rep = _base(system, "simulate", {"h": str(h), "T": str(T), "approximate": args.approximate})
    rep["final_state"] = sol.samples[-1]
    rep["samples"] = int(sol.samples.shape[0])
    return rep


def cmd_saturate(system: DelaySystem, args) -> dict:
    cfg = AnalysisConfig(h=to_fraction(args.h), tol=args.tol)
    Ts = [to_fraction(t) for t in args.T] if args.T else None
    rep = _base(system, "saturate", {"h": str(cfg.h), "tol": cfg.tol, "T": [str(t) for t in Ts] if Ts else None})
    r = range_saturation_check(system, cfg, Ts)
    rep["saturation"] = r
    rep["full_rank"] = r.full_rank
    return rep


def _heatmap(system: DelaySystem, args, config: FrequencyConfig) -> None:
    strip = strip_bounds(system)
    if strip.degenerate or strip.empty:
        lo, hi = -1.0, 1.0
    else:
        lo, hi = strip.beta1 - config.strip_pad, strip.beta2 + config.strip_pad
    dc = commensurability(system)
    unit = float(dc.step) if dc.kind == "commensurable" else system.delays[0]
    sig = np.linspace(lo, hi, args.grid_sigma)
    im = np.linspace(0.0, 2 * math.pi / unit, args.grid_phase)
    M = margin_heatmap(system, sig, im)
    rows = [(s, w, M[i, j]) for i, s in enumerate(sig) for j, w in enumerate(im)]
    _write_csv(args.heatmap, ["sigma", "im_p", "margin"], rows)


def cmd_analyze(system: DelaySystem, args) -> dict:
    config = _freq_config(args)
    rep = _base(system, "analyze", {"mode": args.mode, **dataclasses.asdict(config)})
    rep["delay_class"] = commensurability(system)
    rep["approximate"] = approx_verdict(system, args.mode, config)
    rep["exact_necessary"] = exact_necessary_verdict(system, args.mode, config)
    rep["strip"] = strip_bounds(system)
    if args.ck:
        rep["ck_certificate"] = ck_certificate(system, config)
    if args.heatmap:
        _heatmap(system, args, config)
        rep["heatmap"] = {"path": str(args.heatmap), "rows": args.grid_sigma * args.grid_phase}
    return rep


def cmd_classify(system: DelaySystem, args) -> dict:
    from .locus import LocusError, classify_2x2, classify_3x3, loci_rows

    shape = (system.N, system.d, system.m)
    if shape not in ((2, 2, 1), (2, 3, 1)):
        raise InputError(f"classify needs N=2, d in {{2, 3}}, m=1; got N={shape[0]}, d={shape[1]}, m={shape[2]}")
    config = _freq_config(args)
    try:
        res = classify_2x2(system, config) if system.d == 2 else classify_3x3(system, config)
    except LocusError as exc:
        raise InputError(str(exc)) from exc
    rep = _base(system, "classify", dataclasses.asdict(config))
    rep["classification"] = res
    if args.loci:
        _write_csv(args.loci, ["center_re", "center_im", "radius", "tag"], loci_rows(res))
    return rep


def _read_measure(path):
    from .measure_algebra import loads
    return loads(Path(path).read_text())


def cmd_bezout(system: DelaySystem, args) -> dict:
    from . import measure_algebra as ma

    rep = _base(system, f"bezout {args.action}", {})
    if args.action == "construct":
        out = ma.bezout_construct_commensurable(system)
        if isinstance(out, ma.NoSolution):
            rep["solvable"] = False
            rep["witness"] = out
            return rep
        rep["solvable"] = True
        rep["degree"] = out.degree
        rep["step"] = out.step
        rep["residual"] = ma.bezout_residual(system, out.R, out.S)
        if args.out_r:
            Path(args.out_r).write_text(ma.dumps(out.R))
        if args.out_s:
            Path(args.out_s).write_text(ma.dumps(out.S))
        rep["R"] = ma.dumps(out.R).splitlines()
        rep["S"] = ma.dumps(out.S).splitlines()
        return rep
    if not (args.R and args.S):
        raise InputError(f"bezout {args.action} needs --R and --S")
    R, S = _read_measure(args.R), _read_measure(args.S)
    if args.action == "check":
        rep["horizon"] = args.horizon
        rep["residual"] = ma.bezout_residual(system, R, S, args.horizon)
        return rep
    if not args.psi or args.window is None:
        raise InputError("bezout motion-plan needs --psi and --window")
    psi = _read_measure(args.psi)
    W = to_fraction(args.window)
    if args.extend:
        psi = ma.extend_state(system, psi, W)
    plan = ma.motion_plan(system, R, S, psi, W)
    rep["window"] = str(W)
    rep["valid_upto"] = plan.valid_upto
    rep["state_residual"] = plan.state_residual
    rep["round_trip_residual"] = ma.round_trip_residual(system, plan.omega, psi, plan.valid_upto)
    rep["omega"] = ma.dumps(plan.omega).splitlines()
    if args.out:
        Path(args.out).write_text(ma.dumps(plan.omega))
    return rep


def cmd_xi(system: DelaySystem, args) -> dict:
    from .xi_algebra import xi_table

    exact = args.exact and system.all_exact
    tab = xi_table(system, args.depth, exact=exact)
    keys = sorted(tab.keys(), key=lambda n: (sum(n), tuple(-v for v in n)))
    if args.out:
        header = [f"n{j + 1}" for j in range(system.N)] + ["row"] + [f"c{k + 1}" for k in range(system.d)]
        rows = []
        for n in keys:
            M = tab[n]
            for i in range(system.d):
                vals = [str(v) if exact else repr(float(v)) for v in M[i]]
                rows.append([*n, i, *vals])
        _write_csv(args.out, header, rows)
    rep = _base(system, "xi", {"depth": args.depth, "exact": exact})
    rep["entries"] = len(keys)
    return rep


# -- argument parsing -----------------------------------------------------------

def _values(text: str) -> list:
    return [float(to_fraction(v)) for v in text.split(",")]


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="diffdelay", description="Controllability analysis of difference delay systems.")
    ap.add_argument("--version", action="version", version=f"diffdelay {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("spec", help="JSON system spec")
        p.add_argument("--report", help="write the JSON report here instead of stdout")
        p.add_argument("--timings", action="store_true", help="print wall-clock time on stderr")

    def freq(p):
        p.add_argument("--grid-sigma", type=int, default=12)
        p.add_argument("--grid-phase", type=int, default=16)
        p.add_argument("--strip-pad", type=float, default=0.5)

    p = sub.add_parser("simulate", help="solve the recursion on a grid")
    common(p)
    p.add_argument("--h", default="1/10")
    p.add_argument("--T", required=True)
    p.add_argument("--x0", help="CSV (t, x...) on [-L_N, 0]")
    p.add_argument("--x0-const", type=_values, help="constant initial value, comma separated")
    p.add_argument("--u", help="CSV (t, u...) on [0, T]")
    p.add_argument("--u-const", type=_values, help="constant input, comma separated")
    p.add_argument("--approximate", action="store_true", help="snap off-grid delays")
    p.add_argument("--out", help="trajectory CSV (t, x...)")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("saturate", help="rank of the sampled endpoint map versus T")
    common(p)
    p.add_argument("--h", default="1/10")
    p.add_argument("--tol", type=float, default=1e-9)
    p.add_argument("--T", nargs="*", help="horizons to test (default: around d L_N)")
    p.set_defaults(func=cmd_saturate)

    p = sub.add_parser("analyze", help="frequency-domain controllability verdicts")
    common(p)
    freq(p)
    p.add_argument("--mode", choices=["auto", "commensurable", "two-delay", "closure"], default="auto")
    p.add_argument("--heatmap", help="CSV of the Hautus margin (sigma, im_p, margin)")
    p.add_argument("--ck", action="store_true", help="sample the corona-type certificate")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("classify", help="closed-form two-delay case analysis")
    common(p)
    freq(p)
    p.add_argument("--loci", help="CSV of circle loci (center_re, center_im, radius, tag)")
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("bezout", help="Bezout pairs and motion planning on atomic measures")
    p.add_argument("action", choices=["construct", "check", "motion-plan"])
    common(p)
    p.add_argument("--R", help="measure file for R")
    p.add_argument("--S", help="measure file for S")
    p.add_argument("--out-r")
    p.add_argument("--out-s")
    p.add_argument("--horizon", type=float)
    p.add_argument("--psi", help="target measure file")
    p.add_argument("--window")
    p.add_argument("--extend", action="store_true", help="extend psi from (0, L_N] to a state first")
    p.add_argument("--out", help="write omega here")
    p.set_defaults(func=cmd_bezout)

    p = sub.add_parser("xi", help="dump the coefficient matrices Xi[n]")
    common(p)
    p.add_argument("--depth", type=int, required=True)
    p.add_argument("--exact", action="store_true")
    p.add_argument("--out", help="CSV (n..., row, entries...)")
    p.set_defaults(func=cmd_xi)
    return ap


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    t0 = time.perf_counter()
    try:
        system = load_spec(args.spec)
        report = args.func(system, args)
        _emit(report, args)
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (InputError, ValidationError, GridError, WindowError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    if args.timings:
        print(f"elapsed {time.perf_counter() - t0:.3f} s", file=sys.stderr)
    return 0


def main() -> None:
    sys.exit(run())
