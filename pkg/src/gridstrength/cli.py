"""Command-line front end.

Commands: ``gscr``, ``size-gfm``, ``cgscr``, ``assess``, ``simulate``.
Every command accepts ``--json`` for a machine-readable report.  Exit
codes: 0 success (and stable verdicts), 2 input/validation error,
3 critical-SCR bracket error, 4 unstable verdict.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import sys
import time
from pathlib import Path

import numpy as np
import yaml

from . import __version__
from .network import (
    GfmAttachment,
    NetworkError,
    attach_gfm,
    load_network,
    reduce_network,
)
from .strength import compute_modes, gscr, plan_gfm_units, size_gamma
from .dynamics import (
    BracketError,
    ConsistencyError,
    OperatingPointError,
    assess,
    build_smib_model,
    compute_cgscr,
    load_device,
)
from .simulate import Disturbance, estimate_damping, simulate, traces_to_csv

EXIT_OK = 0
EXIT_INTERNAL = 1
EXIT_INPUT = 2
EXIT_BRACKET = 3
EXIT_UNSTABLE = 4


def _digest(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        h.update(fh.read())
    return h.hexdigest()


def _use_color() -> bool:
    return sys.stdout.isatty() and not os.environ.get("GRIDSTRENGTH_NO_COLOR")


def _verdict_str(verdict: str) -> str:
    if not _use_color():
        return verdict
    color = {"stable": "\033[32m", "unstable": "\033[31m", "marginal": "\033[33m"}
    return f"{color.get(verdict, '')}{verdict}\033[0m"


def _fmt(x: float) -> str:
    return f"{x:.6g}"


def _report(command: str, inputs: dict, quantities: dict, t0: float) -> dict:
    return {
        "command": command,
        "inputs": inputs,
        "quantities": quantities,
        "tool_version": __version__,
        "wall_time_s": time.perf_counter() - t0,
    }


def _emit(report: dict, as_json: bool, lines) -> None:
    if as_json:
        print(json.dumps(report, sort_keys=True, indent=2, default=_jsonable))
    else:
        for line in lines:
            print(line)


def _jsonable(obj):
    if isinstance(obj, complex):
        return {"re": obj.real, "im": obj.imag}
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    raise TypeError(f"not JSON serializable: {type(obj)}")


def cmd_gscr(args) -> int:
    t0 = time.perf_counter()
    spec = load_network(args.network)
    reduced = reduce_network(spec)
    modes = compute_modes(reduced)
    quantities = {
        "gscr": modes.gscr,
        "eigenvalues": list(map(float, modes.lambdas)),
        "farm_ids": list(modes.farm_ids),
        "participation": np.abs(modes.vectors).T.tolist(),  # row i: mode i
    }
    report = _report("gscr", {"network": _digest(args.network)}, quantities, t0)
    lines = [f"gSCR = {_fmt(modes.gscr)}", "modes (ascending):"]
    for i, lam in enumerate(modes.lambdas):
        part = ", ".join(
            f"{fid}={_fmt(abs(v))}" for fid, v in zip(modes.farm_ids, modes.vectors[:, i])
        )
        lines.append(f"  lambda_{i + 1} = {_fmt(float(lam))}   participation: {part}")
    _emit(report, args.json, lines)
    return EXIT_OK


def cmd_size_gfm(args) -> int:
    t0 = time.perf_counter()
    if args.target_gscr <= 0 or args.z_local <= 0:
        raise NetworkError("--target-gscr and --z-local must be positive")
    if args.unit_mva is not None and args.unit_mva <= 0:
        raise NetworkError("--unit-mva must be positive")
    spec = load_network(args.network)
    reduced = reduce_network(spec)
    g0 = gscr(reduced)
    gamma, satisfied = size_gamma(g0, args.target_gscr, args.z_local)
    att = GfmAttachment(gamma=gamma, z_local=args.z_local)
    verified = gscr(attach_gfm(reduced, att))
    caps = spec.farm_capacity_mva
    quantities = {
        "gscr0": g0,
        "target_gscr": args.target_gscr,
        "z_local": args.z_local,
        "gamma_required": gamma,
        "already_satisfied": satisfied,
        "farm_ids": list(spec.farm_ids),
        "gfm_capacity_mva": [gamma * c for c in caps],
        "verified_gscr": verified,
    }
    lines = [
        f"gSCR0 = {_fmt(g0)}",
        f"target gSCR = {_fmt(args.target_gscr)} (z_local = {_fmt(args.z_local)} pu)",
        f"required capacity ratio gamma = {_fmt(gamma * 100)}% ({_fmt(gamma)})",
    ]
    if satisfied:
        lines.append("target already satisfied; no GFM capacity required")
    for fid, c in zip(spec.farm_ids, caps):
        lines.append(f"  {fid}: {_fmt(gamma * c)} MVA of {_fmt(c)} MVA")
    lines.append(f"verified post-installation gSCR = {_fmt(verified)}")
    if args.unit_mva is not None:
        plan = plan_gfm_units(caps, gamma, args.unit_mva, spec.farm_ids)
        realized_att = GfmAttachment(
            gamma=np.array(plan.realized_gamma), z_local=args.z_local
        )
        realized_gscr = gscr(attach_gfm(reduced, realized_att))
        quantities["unit_mva"] = args.unit_mva
        quantities["unit_counts"] = list(plan.counts)
        quantities["realized_gamma"] = list(plan.realized_gamma)
        quantities["realized_gscr_lower_bound"] = g0 + plan.min_realized_gamma / args.z_local
        quantities["realized_gscr"] = realized_gscr
        lines.append(f"unit plan ({_fmt(args.unit_mva)} MVA units):")
        for fid, cnt, rg in zip(spec.farm_ids, plan.counts, plan.realized_gamma):
            lines.append(f"  {fid}: {cnt} unit(s), realized gamma = {_fmt(rg)}")
        lines.append(
            f"realized gSCR = {_fmt(realized_gscr)} "
            f"(uniform-ratio lower bound {_fmt(quantities['realized_gscr_lower_bound'])})"
        )
    report = _report("size-gfm", {"network": _digest(args.network)}, quantities, t0)
    _emit(report, args.json, lines)
    return EXIT_OK


def cmd_cgscr(args) -> int:
    t0 = time.perf_counter()
    dev = load_device(args.device)
    cg, monotone = compute_cgscr(dev, tuple(args.bracket))
    model = build_smib_model(dev, cg)
    eig = np.linalg.eigvals(model.a)
    dom = eig[int(np.argmax(eig.real))]
    quantities = {
        "cgscr": cg,
        "monotone_bracket": monotone,
        "critical_eigenvalue": dom,
        "eigenvalues_at_cgscr": list(eig),
    }
    report = _report("cgscr", {"device": _digest(args.device)}, quantities, t0)
    lines = [
        f"CgSCR = {_fmt(cg)}",
        f"critical eigenvalue = {_fmt(dom.real)} + {_fmt(dom.imag)}j 1/s",
    ]
    if not monotone:
        lines.append("warning: non-monotone stability pattern across bracket")
    _emit(report, args.json, lines)
    return EXIT_OK


def cmd_assess(args) -> int:
    t0 = time.perf_counter()
    spec = load_network(args.network)
    dev = load_device(args.device)
    att = GfmAttachment(gamma=args.gamma, z_local=args.z_local)
    result = assess(spec, dev, att)
    quantities = {
        "gamma": args.gamma,
        "z_local": args.z_local,
        "gscr": result.gscr,
        "cgscr": result.cgscr,
        "margin": result.margin,
        "verdict": result.verdict,
        "eigenvalues": list(result.eigenvalues),
        "damping_ratios": list(map(float, result.damping_ratios)),
        "farm_ids": list(result.farm_ids),
    }
    report = _report(
        "assess",
        {"network": _digest(args.network), "device": _digest(args.device)},
        quantities,
        t0,
    )
    worst = int(np.argmax(result.eigenvalues.real))
    lam = result.eigenvalues[worst]
    lines = [
        f"gSCR = {_fmt(result.gscr)} (gamma = {_fmt(args.gamma)}, "
        f"z_local = {_fmt(args.z_local)})",
        f"CgSCR = {_fmt(result.cgscr)}",
        f"margin = {_fmt(result.margin)}",
        f"worst eigenvalue = {_fmt(lam.real)} + {_fmt(lam.imag)}j 1/s "
        f"(damping ratio {_fmt(float(result.damping_ratios[worst]))})",
        f"verdict: {_verdict_str(result.verdict)}",
    ]
    _emit(report, args.json, lines)
    return EXIT_UNSTABLE if result.verdict == "unstable" else EXIT_OK


def cmd_simulate(args) -> int:
    t0 = time.perf_counter()
    spec = load_network(args.network)
    dev = load_device(args.device)
    att = GfmAttachment(gamma=args.gamma, z_local=args.z_local)
    reduced = attach_gfm(reduce_network(spec), att)
    from .dynamics import direct_full_model

    model = direct_full_model(dev, reduced)
    dist = Disturbance(
        kind="setpoint_step",
        farm_id=args.disturb_farm or spec.farm_ids[0],
        channel="i_d",
        magnitude=args.disturb_magnitude,
        t_apply=args.disturb_time,
    )
    result = simulate(model, dist, duration=args.duration, dt=args.dt)

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    csv_path = out_dir / "traces.csv"
    csv_path.write_text(traces_to_csv(result), encoding="utf-8")

    modes = compute_modes(reduced)
    g = modes.gscr
    try:
        cg, _ = compute_cgscr(dev)
    except BracketError:
        cg = float("nan")
    damping = {}
    for fid in result.farm_ids:
        try:
            damping[fid] = estimate_damping(result, fid).zeta
        except ValueError:
            damping[fid] = None
    meta = {
        "gamma": args.gamma,
        "z_local": args.z_local,
        "gscr": g,
        "cgscr": None if math.isnan(cg) else cg,
        "dt_s": args.dt,
        "duration_s": args.duration,
        "disturbance": {
            "kind": dist.kind,
            "farm_id": dist.farm_id,
            "channel": dist.channel,
            "magnitude_pu": dist.magnitude,
            "t_apply_s": dist.t_apply,
        },
        "truncated_by_overflow_guard": result.truncated,
        "damping_estimates": damping,
    }
    meta_path = out_dir / "traces.meta.yaml"
    meta_path.write_text(
        yaml.safe_dump(meta, sort_keys=True, default_flow_style=False), encoding="utf-8"
    )

    quantities = dict(meta)
    report = _report(
        "simulate",
        {"network": _digest(args.network), "device": _digest(args.device)},
        quantities,
        t0,
    )
    lines = [
        f"wrote {csv_path} and {meta_path}",
        f"gSCR = {_fmt(g)}" + ("" if math.isnan(cg) else f", CgSCR = {_fmt(cg)}"),
        "damping estimates (log-decrement):",
    ]
    for fid, z in damping.items():
        lines.append(f"  {fid}: " + ("n/a (insufficient oscillation)" if z is None else _fmt(z)))
    if result.truncated:
        lines.append("trace truncated by overflow guard (unstable growth)")
    _emit(report, args.json, lines)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gridstrength",
        description="Grid-strength (gSCR) analysis and GFM converter sizing",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gscr", help="grid strength of a network file")
    p.add_argument("network")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_gscr)

    p = sub.add_parser("size-gfm", help="size GFM capacity for a target gSCR")
    p.add_argument("network")
    p.add_argument("--target-gscr", type=float, required=True)
    p.add_argument("--z-local", type=float, default=0.16)
    p.add_argument("--unit-mva", type=float, default=None)
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_size_gfm)

    p = sub.add_parser("cgscr", help="critical SCR of a device file")
    p.add_argument("device")
    p.add_argument("--bracket", type=float, nargs=2, default=[0.9, 6.0],
                   metavar=("LO", "HI"))
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_cgscr)

    p = sub.add_parser("assess", help="full stability assessment")
    p.add_argument("network")
    p.add_argument("device")
    p.add_argument("--gamma", type=float, default=0.0)
    p.add_argument("--z-local", type=float, default=0.16)
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_assess)

    p = sub.add_parser("simulate", help="linear time-domain simulation")
    p.add_argument("network")
    p.add_argument("device")
    p.add_argument("--gamma", type=float, default=0.0)
    p.add_argument("--z-local", type=float, default=0.16)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--dt", type=float, default=1e-3)
    p.add_argument("--duration", type=float, default=3.0)
    p.add_argument("--disturb-farm", default=None)
    p.add_argument("--disturb-magnitude", type=float, default=0.05)
    p.add_argument("--disturb-time", type=float, default=0.1)
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_simulate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except BracketError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BRACKET
    except (NetworkError, OperatingPointError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except ConsistencyError as exc:
        print(f"internal consistency error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
