"""Command-line entry point: ``edgedis-sim run|scenario|election``."""

from __future__ import annotations

import argparse
import itertools
import re
import sys
from dataclasses import fields
from pathlib import Path

from .config import SCHEMES, SimConfig
from .experiments import (
    SWEEPABLE,
    SweepSpec,
    election_csv,
    election_summary,
    rows_to_csv,
    run_election_benchmark,
    run_sweep,
    run_uniqueness_scenario,
)
from .simnet import edge_count

_UNITS = {"": 1, "B": 1, "KB": 1024, "MB": 1024**2, "GB": 1024**3}
_DEFAULTS = {f.name: f.default for f in fields(SimConfig) if f.name != "crashes"}


def parse_size(text: str) -> int:
    m = re.fullmatch(r"\s*(\d+)\s*([KMG]?B?)\s*", text.upper())
    if not m:
        raise ValueError(f"not a byte size: {text!r}")
    return int(m.group(1)) * _UNITS[m.group(2)]


def _pair(text: str) -> tuple[float, float]:
    lo, hi = (float(x) for x in text.split(","))
    return lo, hi


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="edgedis-sim", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="simulate one or more configurations and write CSV")
    d = _DEFAULTS
    r.add_argument("--scheme", choices=SCHEMES, default=d["scheme"])
    r.add_argument("--n", type=int, default=d["n"])
    r.add_argument("--nd", type=float, default=d["nd"])
    r.add_argument("--r", type=float, default=d["r"])
    r.add_argument("--ds", default="1GB", help="data size, e.g. 64MB")
    r.add_argument("--bs", default="512KB", help="block size, e.g. 512KB")
    r.add_argument("--dl-lo", type=float, default=d["dl_lo"])
    r.add_argument("--dl-hi", type=float, default=d["dl_hi"])
    r.add_argument("--cr", type=float, default=d["cr"])
    r.add_argument("--t", type=float, default=d["t_ms"], help="coordinator timeout in ms")
    r.add_argument("--heartbeat-ms", type=float, default=d["heartbeat_ms"])
    r.add_argument("--dist-timeout-ms", type=float, default=d["dist_timeout_ms"])
    r.add_argument("--trans-timeout-ms", type=float, default=d["trans_timeout_ms"])
    r.add_argument("--entry-fraction", type=float, default=d["entry_fraction"])
    r.add_argument("--bw-range", default="1.0,1.0", help="relative bandwidth range lo,hi")
    r.add_argument("--seed", type=int, default=d["seed"])
    r.add_argument("--runs", type=int, default=1)
    r.add_argument("--sweep", action="append", default=[], metavar="PARAM=V1,V2,...")
    r.add_argument("--out", type=Path, help="CSV path (default: stdout)")
    r.add_argument("--trace", type=Path, help="write a tab-separated event trace here")

    s = sub.add_parser("scenario", help="replay the coordinator-uniqueness scenario")
    s.add_argument("--trace", type=Path)

    e = sub.add_parser("election", help="measure coordinator election latency")
    e.add_argument("--n", default="8,32,128", help="comma-separated server counts")
    e.add_argument("--t", default="250", help="comma-separated timeouts in ms")
    e.add_argument("--runs", type=int, default=50)
    e.add_argument("--seed", type=int, default=1)
    e.add_argument("--out", type=Path)
    return parser


def _convert(parser, flag: str, kind, raw: str):
    try:
        if flag in ("ds", "bs"):
            return parse_size(raw)
        return kind(raw)
    except ValueError:
        parser.error(f"--{flag}: invalid value {raw!r}")


def _check(parser, cfg_kwargs: dict, flag_of: dict) -> None:
    n, nd, r = cfg_kwargs["n"], cfg_kwargs["nd"], cfg_kwargs["r"]
    if n < 1:
        parser.error(f"--{flag_of['n']}: must be at least 1")
    if not 0.0 <= r <= 1.0:
        parser.error(f"--{flag_of['r']}: failure rate {r} outside [0, 1]")
    if n >= 2 and (nd > n - 1 or edge_count(n, nd) < n - 1):
        parser.error(f"--{flag_of['nd']}: density {nd} cannot give a connected graph on {n} servers")
    try:
        SimConfig(**cfg_kwargs)
    except ValueError as exc:
        parser.error(str(exc))


def config_from_args(parser, args) -> SweepSpec:
    try:
        bw = _pair(args.bw_range)
    except ValueError:
        parser.error(f"--bw-range: expected lo,hi, got {args.bw_range!r}")
    base = dict(
        scheme=args.scheme,
        n=args.n,
        nd=args.nd,
        r=args.r,
        ds=_convert(parser, "ds", int, args.ds),
        bs=_convert(parser, "bs", int, args.bs),
        dl_lo=args.dl_lo,
        dl_hi=args.dl_hi,
        cr=args.cr,
        t_ms=args.t,
        heartbeat_ms=args.heartbeat_ms,
        dist_timeout_ms=args.dist_timeout_ms,
        trans_timeout_ms=args.trans_timeout_ms,
        entry_fraction=args.entry_fraction,
        seed=args.seed,
        bw_range=bw,
    )
    if args.runs < 1:
        parser.error("--runs: must be at least 1")
    sweeps = []
    for item in args.sweep:
        name, _, values = item.partition("=")
        if name not in SWEEPABLE or not values:
            parser.error(f"--sweep: cannot sweep {item!r}")
        kind = SWEEPABLE[name][1]
        sweeps.append((name, [_convert(parser, name, kind, v) for v in values.split(",")]))
    flag_of = {"n": "n", "nd": "nd", "r": "r"}
    _check(parser, base, flag_of)
    swept = {SWEEPABLE[name][0] for name, _ in sweeps}
    sweep_flags = {k: ("sweep " + k if k in swept else k) for k in flag_of}
    for combo in itertools.product(*(vals for _, vals in sweeps)):
        point = dict(base)
        point.update({SWEEPABLE[k][0]: v for (k, _), v in zip(sweeps, combo)})
        _check(parser, point, sweep_flags)
    return SweepSpec(SimConfig(**base), sweeps, args.runs)


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)

    if args.command == "run":
        spec = config_from_args(parser, args)
        trace: list[str] | None = [] if args.trace else None
        rows = run_sweep(spec, trace_out=trace)
        text = rows_to_csv(rows)
        if args.out:
            args.out.write_text(text)
        else:
            sys.stdout.write(text)
        if trace is not None:
            args.trace.write_text("\n".join(trace) + "\n")
        stalled = [r for r in rows if r["seed"] != "mean" and r["stalled"]]
        if stalled:
            print(f"{len(stalled)} run(s) stalled", file=sys.stderr)
            return 1
        return 0

    if args.command == "scenario":
        verdict = run_uniqueness_scenario()
        for c in verdict.checks:
            print(f"{'ok  ' if c.ok else 'FAIL'} [{c.event}] {c.what}")
        print("coordinator terms:", " -> ".join(map(str, verdict.coordinator_terms)))
        if args.trace:
            args.trace.write_text("\n".join(verdict.trace) + "\n")
        if not verdict.passed:
            print("scenario failed; event trace follows", file=sys.stderr)
            print("\n".join(verdict.trace), file=sys.stderr)
            return 1
        return 0

    # election
    try:
        ns = [int(x) for x in args.n.split(",")]
        ts = [float(x) for x in args.t.split(",")]
    except ValueError:
        parser.error("--n/--t: expected comma-separated numbers")
    samples = run_election_benchmark(ns, ts, args.runs, seed=args.seed)
    text = election_csv(samples)
    if args.out:
        args.out.write_text(text)
    else:
        sys.stdout.write(text)
    for row in election_summary(samples):
        print(
            f"n={row['n']} t={row['t_ms']:g}ms p50={row['p50_ms']:.1f} "
            f"p95={row['p95_ms']:.1f} splits={row['split_rounds']}",
            file=sys.stderr,
        )
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
