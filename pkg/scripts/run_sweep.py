#!/usr/bin/env python3
"""Sweep |Q2| on an 8-replica cluster and write the trend CSV.

Heterogeneous link latencies plus fastest-quorum selection: smaller
phase-2 quorums commit on faster acceptor subsets, so mean latency and
messages per commit both fall as |Q2| shrinks -- at the price of larger
phase-1 quorums during leader changes.
"""

import argparse

from fpaxos.quorum import make_simple
from fpaxos.sim import Latency, RunMetrics, SimConfig, run


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n", type=int, default=8)
    ap.add_argument("--q2", default="2,3,4,5")
    ap.add_argument("--seeds", type=int, default=5)
    ap.add_argument("--latency", default="5:25")
    ap.add_argument("--duration-ms", type=float, default=10_000)
    ap.add_argument("--out", default="sweep.csv")
    args = ap.parse_args()

    rows = []
    for q2 in (int(x) for x in args.q2.split(",")):
        for seed in range(args.seeds):
            cfg = SimConfig(
                quorum=make_simple(args.n, q2),
                seed=seed,
                latency=Latency.parse(args.latency),
                strategy="fastest",
                duration_ms=args.duration_ms,
                warmup_ms=args.duration_ms * 0.1,
                cooldown_ms=args.duration_ms * 0.1,
                record_trace=False,
            )
            m, _ = run(cfg)
            rows.append(m)
            print(m.csv_row())
    with open(args.out, "w") as f:
        f.write(RunMetrics.CSV_HEADER + "\n")
        f.writelines(m.csv_row() + "\n" for m in rows)
    print(f"wrote {len(rows)} rows to {args.out}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
