"""Command-line entry point.

Subcommands:

* ``quorum analyze`` -- sizes, cross-phase intersection, fault tolerance.
* ``check`` -- bounded exhaustive safety checking, with counterexample
  output and a constructor/falsification sweep.
* ``simulate`` -- one deterministic simulation run or scripted scenario.
* ``sweep`` -- a family of simulation runs written as CSV/JSON.

Exit codes: 0 success/safe, 1 safety violation found, 2 usage error.
All output is a pure function of flags plus the seed; the default seed
comes from ``FPAXOS_SEED`` when set.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from . import checker as chk
from . import scenarios, sim
from .quorum import (
    QuorumSystem,
    UnverifiableError,
    failure_tolerance,
    make_explicit,
    make_grid,
    make_majority,
    make_simple,
    validate_cross_intersection,
)

USAGE_ERROR = 2


def default_seed() -> int:
    return int(os.environ.get("FPAXOS_SEED", "0"))


# -- shared quorum flags --------------------------------------------------


def add_quorum_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--kind", choices=["majority", "simple", "grid"], help="quorum family")
    p.add_argument("--n", type=int, help="acceptor count (majority/simple)")
    p.add_argument("--improved", action="store_true", help="majority: shrink |Q2| to ceil(n/2)")
    p.add_argument("--q2", type=int, help="simple: phase-2 quorum size")
    p.add_argument("--rows", type=int, help="grid: row count")
    p.add_argument("--cols", type=int, help="grid: column count")
    p.add_argument("--mode", choices=["paxos", "fpaxos"], default="fpaxos", help="grid mode")


def quorum_from_args(args) -> QuorumSystem:
    if args.kind == "majority":
        if args.n is None:
            raise ValueError("--kind majority requires --n")
        return make_majority(args.n, improved=args.improved)
    if args.kind == "simple":
        if args.n is None or args.q2 is None:
            raise ValueError("--kind simple requires --n and --q2")
        return make_simple(args.n, args.q2)
    if args.kind == "grid":
        if args.rows is None or args.cols is None:
            raise ValueError("--kind grid requires --rows and --cols")
        return make_grid(args.rows, args.cols, mode=args.mode)
    raise ValueError("no quorum system given (use --kind)")


# -- quorum analyze -------------------------------------------------------


def cmd_quorum_analyze(args) -> int:
    qs = quorum_from_args(args)
    try:
        intersects = validate_cross_intersection(qs)
    except UnverifiableError as e:
        intersects = None
        note = str(e)
    report = failure_tolerance(qs)
    placement = None
    if report.guaranteed_f != report.best_case_f:
        placement = [report.guaranteed_f + 1, report.best_case_f]
    out = {
        "quorum": qs.to_json(),
        "q1": qs.min_q1_size(),
        "q2": qs.min_q2_size(),
        "intersects": intersects,
        "tolerance": report.as_dict(),
        "placement_range": placement,
    }
    if args.json:
        print(json.dumps(out, separators=(",", ":")))
    else:
        print(f"quorum system            : {qs.describe()}")
        print(f"acceptors                : {qs.n}")
        print(f"min |Q1|                 : {out['q1']}")
        print(f"min |Q2|                 : {out['q2']}")
        status = {True: "OK", False: "BROKEN", None: "UNVERIFIABLE"}[intersects]
        print(f"cross-phase intersection : {status}")
        if intersects is None:
            print(f"  note: {note}")
        print(f"guaranteed f (both phases) : {report.guaranteed_f}")
        print(f"best-case f (both phases)  : {report.best_case_f}")
        print(f"best-case f (phase 2 only) : {report.phase2_only_max_f}")
        if placement:
            print(f"placement-sensitive range  : {placement[0]}..{placement[1]}")
    return 1 if intersects is False else 0


# -- check ----------------------------------------------------------------


def cmd_check(args) -> int:
    if args.sweep is not None:
        report = chk.quorum_safety_sweep(args.sweep, max_states=args.max_states)
        for e in report:
            verdict = "violation" if e.violation_found else "safe"
            agree = "" if e.consistent else "  << INCONSISTENT"
            print(
                f"{e.name:28s} intersects={str(e.intersects):5s} "
                f"{verdict:9s} states={e.states}{agree}"
            )
        ok = all(e.consistent for e in report)
        print("sweep:", "consistent" if ok else "INCONSISTENT")
        return 0 if ok else 1

    if args.config:
        with open(args.config) as f:
            cfg = chk.check_config_from_json(json.load(f))
    else:
        if args.custom_q1 or args.custom_q2:
            if not (args.custom_q1 and args.custom_q2 and args.n):
                raise ValueError("--custom-q1/--custom-q2 require each other and --n")
            qs = make_explicit(args.n, json.loads(args.custom_q1), json.loads(args.custom_q2))
        else:
            qs = quorum_from_args(args)
        cfg = chk.CheckConfig(
            quorum=qs,
            ballots=args.ballots,
            values=chk.value_names(args.values),
            proposers=args.proposers,
            max_states=args.max_states,
            symmetry=args.symmetry,
        )
    res = chk.explore(cfg)
    print(f"states explored : {res.states}")
    if res.complete:
        completeness = "yes"
    elif res.violation is not None:
        completeness = "no (stopped at first violation)"
    else:
        completeness = "no (state budget exceeded)"
    print(f"complete        : {completeness}")
    if res.violation is None:
        print("result          : SAFE" if res.complete else "result          : NO VIOLATION FOUND (partial)")
        return 0
    v = res.violation
    print(f"result          : VIOLATION ({v.property}) in {len(v.path)} actions")
    rr = chk.replay(v.path, cfg)
    print(f"replay          : {'confirmed' if rr.conflicting or v.property == chk.PROPOSAL_CONSISTENCY else 'NOT CONFIRMED'}"
          f" ({len(rr.decisions)} decisions observed)")
    if args.counterexample:
        with open(args.counterexample, "w") as f:
            f.write(chk.counterexample_jsonl(v, cfg))
        print(f"counterexample  : {args.counterexample}")
    return 1


# -- simulate ---------------------------------------------------------------


def _parse_timed(text: str, what: str):
    fields = {}
    flags = []
    for part in text.split(","):
        part = part.strip()
        if "=" in part:
            k, v = part.split("=", 1)
            fields[k.strip()] = float(v)
        elif part:
            flags.append(part)
    if "t" not in fields or ("r" not in fields and what != "partition"):
        raise ValueError(f"--{what} needs t=<ms>,r=<replica>")
    return fields, flags


def _parse_partition(text: str) -> sim.PartitionEvent:
    if ";" not in text:
        raise ValueError('--partition format: "t=<ms>;0,1|2,3" (empty groups heal)')
    head, groups_text = text.split(";", 1)
    fields, _ = _parse_timed(head + ",", "partition")
    groups = tuple(
        tuple(int(x) for x in g.split(",") if x.strip() != "")
        for g in groups_text.split("|")
        if g.strip() != ""
    )
    return sim.PartitionEvent(fields["t"], groups)


def sim_config_from_args(args) -> sim.SimConfig:
    if args.config:
        with open(args.config) as f:
            base = sim.SimConfig.from_json(json.load(f))
        if args.seed is not None:
            base = sim.SimConfig.from_json({**base.to_json(), "seed": args.seed})
        return base
    qs = quorum_from_args(args)
    crashes = []
    for text in args.crash or []:
        fields, flags = _parse_timed(text, "crash")
        crashes.append(sim.CrashEvent(fields["t"], int(fields["r"]), "wipe" in flags))
    restores = [
        sim.RestoreEvent(f["t"], int(f["r"]))
        for f, _ in (_parse_timed(t, "restore") for t in args.restore or [])
    ]
    elections = [
        sim.ElectionEvent(f["t"], int(f["r"]))
        for f, _ in (_parse_timed(t, "elect") for t in args.elect or [])
    ]
    partitions = [_parse_partition(t) for t in args.partition or []]
    return sim.SimConfig(
        quorum=qs,
        seed=args.seed if args.seed is not None else default_seed(),
        latency=sim.Latency.parse(args.latency),
        loss=args.loss,
        duplicate=args.duplicate,
        crashes=tuple(crashes),
        restores=tuple(restores),
        elections=tuple(elections),
        partitions=tuple(partitions),
        request_size=args.request_size,
        window=args.window,
        duration_ms=args.duration_ms,
        warmup_ms=args.warmup_ms,
        cooldown_ms=args.cooldown_ms,
        strategy=args.strategy,
        send_to_all=args.send_to_all,
        initial_leader=args.leader,
        record_trace=bool(args.trace) or args.force_trace,
    )


def _write(path: str, text: str) -> None:
    with open(path, "w") as f:
        f.write(text)


def cmd_simulate(args) -> int:
    if args.scenario:
        result = scenarios.run_scenario(args.scenario)
        text = sim.to_jsonl(result.trace)
        if args.trace:
            _write(args.trace, text)
            print(
                json.dumps(
                    {
                        "scenario": result.name,
                        "violation": result.violation,
                        "decided": result.decided_values,
                    },
                    separators=(",", ":"),
                )
            )
        else:
            sys.stdout.write(text)
        return 1 if result.violation else 0

    cfg = sim_config_from_args(args)
    try:
        metrics, trace = sim.run(cfg)
    except sim.SafetyViolationError as e:
        print(f"SAFETY VIOLATION: slot {e.slot} decided as {e.values!r}", file=sys.stderr)
        if args.trace:
            _write(args.trace, sim.to_jsonl(e.trace))
            print(f"counterexample trace: {args.trace}", file=sys.stderr)
        return 1
    if args.trace:
        _write(args.trace, sim.to_jsonl(trace))
    if args.metrics:
        _write(args.metrics, json.dumps(metrics.to_json(), indent=2) + "\n")
    if args.csv:
        _write(args.csv, metrics.CSV_HEADER + "\n" + metrics.csv_row() + "\n")
    print(json.dumps(metrics.to_json(), separators=(",", ":")))
    return 0


# -- sweep -------------------------------------------------------------------


def build_sweep(args):
    """Expand sweep flags (or a JSON spec) into a run list."""
    if args.spec:
        with open(args.spec) as f:
            spec = json.load(f)
        base = {k: v for k, v in spec.items() if k not in ("q2_list", "seeds", "out", "format")}
        q2_list = spec.get("q2_list")
        seeds = spec.get("seeds", 1)
        out = spec.get("out", args.out)
        fmt = spec.get("format", args.format)
    else:
        base = {
            "quorum": quorum_from_args(args).to_json(),
            "latency": args.latency,
            "loss": args.loss,
            "duplicate": args.duplicate,
            "request_size": args.request_size,
            "window": args.window,
            "duration_ms": args.duration_ms,
            "warmup_ms": args.warmup_ms,
            "cooldown_ms": args.cooldown_ms,
            "strategy": args.strategy,
            "send_to_all": args.send_to_all,
        }
        q2_list = [int(x) for x in args.q2_list.split(",")] if args.q2_list else None
        seeds = args.seeds
        out, fmt = args.out, args.format
    seed_list = list(range(seeds)) if isinstance(seeds, int) else list(seeds)
    configs = []
    for q2 in q2_list or [None]:
        d = dict(base)
        if q2 is not None:
            d["quorum"] = {**d["quorum"], "kind": "simple", "q2_size": q2}
        for seed in seed_list:
            configs.append(sim.SimConfig.from_json({**d, "seed": seed, "record_trace": False}))
    return configs, out, fmt


def cmd_sweep(args) -> int:
    configs, out, fmt = build_sweep(args)
    if not out:
        raise ValueError("sweep needs --out (or 'out' in the spec)")
    for cfg in configs:
        if not validate_cross_intersection(cfg.quorum):
            raise ValueError(f"refusing to run {cfg.quorum.describe()}: quorums do not intersect")
    results = [sim.run(cfg)[0] for cfg in configs]
    if fmt == "csv":
        text = sim.RunMetrics.CSV_HEADER + "\n" + "".join(m.csv_row() + "\n" for m in results)
    else:
        text = json.dumps([m.to_json() for m in results], indent=2) + "\n"
    _write(out, text)
    print(f"wrote {len(results)} runs to {out}")
    return 0


# -- parser -------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fpaxos", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    pq = sub.add_parser("quorum", help="quorum system analysis")
    qsub = pq.add_subparsers(dest="subcommand", required=True)
    pa = qsub.add_parser("analyze", help="sizes, intersection, fault tolerance")
    add_quorum_args(pa)
    pa.add_argument("--json", action="store_true", help="machine-readable output")
    pa.set_defaults(func=cmd_quorum_analyze)

    pc = sub.add_parser("check", help="bounded exhaustive safety check")
    add_quorum_args(pc)
    pc.add_argument("--custom-q1", help="explicit phase-1 sets as JSON, e.g. '[[0]]'")
    pc.add_argument("--custom-q2", help="explicit phase-2 sets as JSON, e.g. '[[1]]'")
    pc.add_argument("--ballots", type=int, default=2, help="distinct ballots to explore")
    pc.add_argument("--values", type=int, default=2, help="distinct proposable values")
    pc.add_argument("--proposers", type=int, default=2, help="ballot owners")
    pc.add_argument("--max-states", type=int, default=2_000_000)
    pc.add_argument("--symmetry", action="store_true", help="canonicalize symmetric states")
    pc.add_argument("--counterexample", metavar="PATH", help="write violating action trace here")
    pc.add_argument("--config", metavar="PATH", help="JSON check configuration")
    pc.add_argument("--sweep", type=int, metavar="N_MAX",
                    help="run the constructor/falsification catalog up to n=N_MAX")
    pc.set_defaults(func=cmd_check)

    ps = sub.add_parser("simulate", help="deterministic simulation run")
    add_quorum_args(ps)
    ps.add_argument("--scenario", choices=scenarios.SCENARIOS, help="scripted execution")
    ps.add_argument("--seed", type=int, default=None)
    ps.add_argument("--latency", default="10", help="one-way ms: fixed '10' or uniform '5:25'")
    ps.add_argument("--loss", type=float, default=0.0)
    ps.add_argument("--duplicate", type=float, default=0.0)
    ps.add_argument("--crash", action="append", metavar="t=MS,r=ID[,wipe]")
    ps.add_argument("--restore", action="append", metavar="t=MS,r=ID")
    ps.add_argument("--elect", action="append", metavar="t=MS,r=ID")
    ps.add_argument("--partition", action="append", metavar="t=MS;0,1|2,3")
    ps.add_argument("--request-size", type=int, default=64)
    ps.add_argument("--window", type=int, default=10)
    ps.add_argument("--duration-ms", type=float, default=120_000.0)
    ps.add_argument("--warmup-ms", type=float, default=10_000.0)
    ps.add_argument("--cooldown-ms", type=float, default=10_000.0)
    ps.add_argument("--strategy", choices=["first", "rotating", "random", "fastest"], default="first")
    ps.add_argument("--send-to-all", action="store_true", help="broadcast instead of quorum sends")
    ps.add_argument("--leader", type=int, default=0, help="initially elected replica")
    ps.add_argument("--trace", metavar="PATH", help="write JSON-lines trace here")
    ps.add_argument("--metrics", metavar="PATH", help="write metrics JSON here")
    ps.add_argument("--csv", metavar="PATH", help="write one-row CSV here")
    ps.add_argument("--force-trace", action="store_true", help=argparse.SUPPRESS)
    ps.add_argument("--config", metavar="PATH", help="JSON simulation configuration")
    ps.set_defaults(func=cmd_simulate)

    pw = sub.add_parser("sweep", help="batch of simulation runs")
    add_quorum_args(pw)
    pw.add_argument("--q2-list", help="comma-separated |Q2| values (simple quorums)")
    pw.add_argument("--seeds", type=int, default=1, help="seeds 0..N-1 per configuration")
    pw.add_argument("--latency", default="10")
    pw.add_argument("--loss", type=float, default=0.0)
    pw.add_argument("--duplicate", type=float, default=0.0)
    pw.add_argument("--request-size", type=int, default=64)
    pw.add_argument("--window", type=int, default=10)
    pw.add_argument("--duration-ms", type=float, default=120_000.0)
    pw.add_argument("--warmup-ms", type=float, default=10_000.0)
    pw.add_argument("--cooldown-ms", type=float, default=10_000.0)
    pw.add_argument("--strategy", choices=["first", "rotating", "random", "fastest"], default="first")
    pw.add_argument("--send-to-all", action="store_true")
    pw.add_argument("--spec", metavar="PATH", help="JSON experiment spec")
    pw.add_argument("--out", metavar="PATH", help="results file")
    pw.add_argument("--format", choices=["csv", "json"], default="csv")
    pw.set_defaults(func=cmd_sweep)

    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError, json.JSONDecodeError) as e:
        print(f"error: {e}", file=sys.stderr)
        return USAGE_ERROR


if __name__ == "__main__":
    sys.exit(main())
