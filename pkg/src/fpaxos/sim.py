"""Deterministic discrete-event simulator with fault injection.

A world hosts n combined acceptor/proposer/learner replicas, a virtual
clock in integer microseconds, and a single seeded RNG.  Identical
configurations (including the seed) produce byte-identical traces and
metrics.  Events are processed in (time, insertion-sequence) order, so
ties break deterministically.

The network model is one-way link latency per replica pair (fixed, or
sampled once per pair from a uniform range), optional message loss and
duplication, and partition schedules.  Bandwidth and queueing are not
modeled; absolute throughput is therefore not meaningful to compare
against real deployments, while trends across quorum configurations are.

The client is closed-loop and co-located with the leader: it keeps a
fixed window of requests outstanding and submits a new one per response.
Client links have zero latency and never fail, so protocol messages and
client messages can be accounted separately.

Safety is checked online: after every delivery that can extend a
phase-2 quorum the world recomputes the learner rule for that slot over
all replicas, and any slot that ever resolves to two different values
aborts the run with the trace as counterexample.
"""

from __future__ import annotations

import heapq
import json
import math
import random
from collections import Counter, defaultdict
from dataclasses import dataclass, replace
from typing import Optional, Tuple

from . import core, multi
from .multi import CLIENT, NOOP, Replica
from .quorum import QuorumSystem

US_PER_MS = 1000


def ms_to_us(ms: float) -> int:
    return int(round(ms * US_PER_MS))


class SafetyViolationError(Exception):
    """A slot resolved to two different values; carries the evidence."""

    def __init__(self, slot, values, trace):
        self.slot = slot
        self.values = values
        self.trace = trace
        super().__init__(f"slot {slot} decided as {values!r}")


@dataclass(frozen=True)
class Latency:
    """One-way link latency; fixed when lo == hi, else uniform per pair."""

    lo_ms: float = 10.0
    hi_ms: float = 10.0

    def __post_init__(self):
        if self.lo_ms < 0 or self.hi_ms < self.lo_ms:
            raise ValueError("need 0 <= lo_ms <= hi_ms")

    def sample_us(self, rng: random.Random) -> int:
        if self.lo_ms == self.hi_ms:
            return ms_to_us(self.lo_ms)
        return ms_to_us(rng.uniform(self.lo_ms, self.hi_ms))

    @staticmethod
    def parse(text: str) -> "Latency":
        if ":" in text:
            lo, hi = text.split(":", 1)
            return Latency(float(lo), float(hi))
        return Latency(float(text), float(text))

    def spec(self) -> str:
        if self.lo_ms == self.hi_ms:
            return f"{self.lo_ms:g}"
        return f"{self.lo_ms:g}:{self.hi_ms:g}"


@dataclass(frozen=True)
class CrashEvent:
    t_ms: float
    replica: int
    lose_memory: bool = False


@dataclass(frozen=True)
class RestoreEvent:
    t_ms: float
    replica: int


@dataclass(frozen=True)
class ElectionEvent:
    t_ms: float
    replica: int


@dataclass(frozen=True)
class PartitionEvent:
    t_ms: float
    groups: Tuple[Tuple[int, ...], ...] = ()  # empty tuple heals the network


@dataclass(frozen=True)
class SimConfig:
    quorum: QuorumSystem
    seed: int = 0
    latency: Latency = Latency(10.0, 10.0)
    loss: float = 0.0
    duplicate: float = 0.0
    crashes: Tuple[CrashEvent, ...] = ()
    restores: Tuple[RestoreEvent, ...] = ()
    elections: Tuple[ElectionEvent, ...] = ()
    partitions: Tuple[PartitionEvent, ...] = ()
    request_size: int = 64
    window: int = 10
    duration_ms: float = 120_000.0
    warmup_ms: float = 10_000.0
    cooldown_ms: float = 10_000.0
    strategy: str = "first"
    send_to_all: bool = False
    initial_leader: int = 0
    record_trace: bool = True
    election_retry_ms: float = 100.0
    retransmit_ms: float = 200.0

    @property
    def n(self) -> int:
        return self.quorum.n

    def validate(self) -> None:
        if not 0.0 <= self.loss <= 1.0 or not 0.0 <= self.duplicate <= 1.0:
            raise ValueError("probabilities must lie in [0, 1]")
        if not 0 <= self.initial_leader < self.n:
            raise ValueError("initial_leader out of range")
        if self.window < 1:
            raise ValueError("window must be >= 1")
        if self.request_size < 12:
            raise ValueError("request_size must be >= 12 bytes")
        if self.warmup_ms + self.cooldown_ms >= self.duration_ms:
            raise ValueError("warmup + cooldown must leave a steady window")
        for name in ("crashes", "restores", "elections", "partitions"):
            sched = getattr(self, name)
            times = [ev.t_ms for ev in sched]
            if times != sorted(times):
                raise ValueError(f"{name} schedule must be time-ordered")
            for ev in sched:
                r = getattr(ev, "replica", None)
                if r is not None and not 0 <= r < self.n:
                    raise ValueError(f"{name} entry names replica {r} outside [0, {self.n})")

    def to_json(self) -> dict:
        return {
            "quorum": self.quorum.to_json(),
            "seed": self.seed,
            "latency": self.latency.spec(),
            "loss": self.loss,
            "duplicate": self.duplicate,
            "crashes": [[e.t_ms, e.replica, e.lose_memory] for e in self.crashes],
            "restores": [[e.t_ms, e.replica] for e in self.restores],
            "elections": [[e.t_ms, e.replica] for e in self.elections],
            "partitions": [[e.t_ms, [list(g) for g in e.groups]] for e in self.partitions],
            "request_size": self.request_size,
            "window": self.window,
            "duration_ms": self.duration_ms,
            "warmup_ms": self.warmup_ms,
            "cooldown_ms": self.cooldown_ms,
            "strategy": self.strategy,
            "send_to_all": self.send_to_all,
            "initial_leader": self.initial_leader,
        }

    @staticmethod
    def from_json(d: dict) -> "SimConfig":
        kw = dict(
            quorum=QuorumSystem.from_json(d["quorum"]),
            seed=d.get("seed", 0),
            latency=Latency.parse(str(d.get("latency", "10"))),
            loss=d.get("loss", 0.0),
            duplicate=d.get("duplicate", 0.0),
            crashes=tuple(CrashEvent(*e) for e in d.get("crashes", [])),
            restores=tuple(RestoreEvent(*e) for e in d.get("restores", [])),
            elections=tuple(ElectionEvent(*e) for e in d.get("elections", [])),
            partitions=tuple(
                PartitionEvent(t, tuple(tuple(g) for g in gs))
                for t, gs in d.get("partitions", [])
            ),
        )
        for key in (
            "request_size", "window", "duration_ms", "warmup_ms", "cooldown_ms",
            "strategy", "send_to_all", "initial_leader", "record_trace",
            "election_retry_ms", "retransmit_ms",
        ):
            if key in d:
                kw[key] = d[key]
        return SimConfig(**kw)


def _pctl(sorted_xs, p: float) -> float:
    """Nearest-rank percentile of an ascending list."""
    if not sorted_xs:
        return 0.0
    k = max(1, math.ceil(p * len(sorted_xs)))
    return sorted_xs[k - 1]


def _mean(xs) -> float:
    return sum(xs) / len(xs) if xs else 0.0


@dataclass(frozen=True)
class RunMetrics:
    n: int
    kind: str
    q1: int
    q2: int
    seed: int
    committed: int
    throughput: float
    mean_latency_ms: float
    median_latency_ms: float
    p99_latency_ms: float
    msgs_per_commit: float
    protocol_msgs_per_commit: float
    message_counts: dict
    per_replica_sent: tuple
    per_replica_received: tuple
    nacks: int
    drops: int
    decided_slots: int
    noop_slots: int

    CSV_HEADER = "n,kind,q1,q2,seed,throughput,mean_lat,p99_lat,msgs_per_commit"

    def to_json(self) -> dict:
        return {
            "n": self.n,
            "kind": self.kind,
            "q1": self.q1,
            "q2": self.q2,
            "seed": self.seed,
            "committed": self.committed,
            "throughput": self.throughput,
            "mean_latency_ms": self.mean_latency_ms,
            "median_latency_ms": self.median_latency_ms,
            "p99_latency_ms": self.p99_latency_ms,
            "msgs_per_commit": self.msgs_per_commit,
            "protocol_msgs_per_commit": self.protocol_msgs_per_commit,
            "message_counts": dict(sorted(self.message_counts.items())),
            "per_replica_sent": list(self.per_replica_sent),
            "per_replica_received": list(self.per_replica_received),
            "nacks": self.nacks,
            "drops": self.drops,
            "decided_slots": self.decided_slots,
            "noop_slots": self.noop_slots,
        }

    def csv_row(self) -> str:
        return (
            f"{self.n},{self.kind},{self.q1},{self.q2},{self.seed},"
            f"{self.throughput:.6f},{self.mean_latency_ms:.6f},"
            f"{self.p99_latency_ms:.6f},{self.msgs_per_commit:.6f}"
        )


def to_jsonl(lines) -> str:
    return "".join(json.dumps(l, separators=(",", ":")) + "\n" for l in lines)


_PROTO_SLOT = (multi.SlotPropose, multi.SlotAccept, multi.SlotNack)
_PROTO_GLOBAL = (multi.LeaderPrepare, multi.LeaderPromise, multi.LeaderNack)


class World:
    """Owner of all replica state, the event heap, and the metrics."""

    def __init__(self, cfg: SimConfig):
        cfg.validate()
        self.cfg = cfg
        n = cfg.n
        self.rng = random.Random(cfg.seed)
        self.lat = [[0] * n for _ in range(n)]
        for i in range(n):
            for j in range(i, n):
                d = cfg.latency.sample_us(self.rng)
                self.lat[i][j] = self.lat[j][i] = d
        self.replicas = [
            Replica(
                i,
                cfg.quorum,
                window=cfg.window,
                strategy=cfg.strategy,
                send_to_all=cfg.send_to_all,
                rng=random.Random((cfg.seed << 8) ^ i),
                latency=self.lat[i],
            )
            for i in range(n)
        ]
        self.alive = set(range(n))
        self.partition = None  # id -> group index, or None when healed
        self.heap = []
        self.seq = 0
        self.now = 0
        self.end_us = ms_to_us(cfg.duration_ms)
        self.trace = []
        self.leader_id = None
        self.intended = None
        # client
        self.client_started = False
        self.req_seq = 0
        self.outstanding = {}  # req_id -> (submit_us, payload)
        self.responses = {}  # req_id -> (t_us, slot, latency_us)
        # metrics
        self.msg_counts = Counter()
        self.sent = [0] * n
        self.recv = [0] * n
        self.slot_proto = defaultdict(int)
        self.slot_client = defaultdict(int)
        self.req_msgs = Counter()
        self.registry = {}  # slot -> first decided value (world learner)
        self.decided_at = {}  # slot -> (t_us, value)
        self.nacks = 0
        self.drops = 0
        self.pending_retransmit = set()
        self.faults_possible = bool(
            cfg.loss or cfg.duplicate or cfg.crashes or cfg.restores
            or cfg.partitions or cfg.elections
        )

    # -- plumbing -----------------------------------------------------

    def _schedule(self, t_us: int, kind: str, payload) -> None:
        heapq.heappush(self.heap, (t_us, self.seq, kind, payload))
        self.seq += 1

    def _trace(self, ev: str, **fields) -> None:
        if self.cfg.record_trace:
            self.trace.append({"t": self.now, "ev": ev, **fields})

    def _same_side(self, a, b) -> bool:
        if self.partition is None:
            return True
        return self.partition.get(a) == self.partition.get(b)

    def reachable(self, r: int) -> frozenset:
        return frozenset(a for a in self.alive if self._same_side(r, a))

    # -- run loop -------------------------------------------------------

    def run(self) -> RunMetrics:
        cfg = self.cfg
        self._schedule(0, "election", cfg.initial_leader)
        for ev in cfg.crashes:
            self._schedule(ms_to_us(ev.t_ms), "crash", ev)
        for ev in cfg.restores:
            self._schedule(ms_to_us(ev.t_ms), "restore", ev)
        for ev in cfg.elections:
            self._schedule(ms_to_us(ev.t_ms), "election", ev.replica)
        for ev in cfg.partitions:
            self._schedule(ms_to_us(ev.t_ms), "partition", ev.groups)
        handlers = {
            "deliver": self._on_deliver,
            "crash": self._on_crash,
            "restore": self._on_restore,
            "election": self._on_election,
            "election_retry": self._on_election_retry,
            "retransmit": self._on_retransmit,
            "partition": self._on_partition,
        }
        while self.heap:
            t, _, kind, payload = heapq.heappop(self.heap)
            if t > self.end_us:
                break
            self.now = t
            handlers[kind](payload)
        return self._metrics()

    # -- sending --------------------------------------------------------

    def _dispatch(self, msgs, owner: Optional[Replica] = None) -> None:
        for m in msgs:
            self._send(m)
        if owner is None:
            return
        new_slots = owner.take_new_slots()
        if self.faults_possible:
            for slot in new_slots:
                self._arm_retransmit(owner.id, slot)

    def _arm_retransmit(self, r: int, slot: int) -> None:
        key = (r, slot)
        if key not in self.pending_retransmit:
            self.pending_retransmit.add(key)
            self._schedule(self.now + ms_to_us(self.cfg.retransmit_ms), "retransmit", key)

    def _send(self, m) -> None:
        cfg = self.cfg
        if isinstance(m, multi.Response) and m.latency_us is None and m.req_id in self.outstanding:
            m = replace(m, latency_us=self.now - self.outstanding[m.req_id][0])
        tname = type(m).__name__
        self.msg_counts[tname] += 1
        if isinstance(m.src, int):
            self.sent[m.src] += 1
        if isinstance(m, _PROTO_SLOT):
            self.slot_proto[m.slot] += 1
            if isinstance(m, multi.SlotNack):
                self.nacks += 1
        elif isinstance(m, multi.LeaderNack):
            self.nacks += 1
        elif isinstance(m, multi.Request):
            self.req_msgs[m.req_id] += 1
        elif isinstance(m, multi.Response):
            self.slot_client[m.slot] += self.req_msgs[m.req_id] + 1
        self._trace("send", msg=multi.message_json(m))
        if m.src == CLIENT or m.dst == CLIENT:
            self._schedule(self.now, "deliver", m)  # co-located, lossless
            return
        if not self._same_side(m.src, m.dst):
            self.drops += 1
            self._trace("drop", why="partition", msg=multi.message_json(m))
            return
        if cfg.loss and self.rng.random() < cfg.loss:
            self.drops += 1
            self._trace("drop", why="loss", msg=multi.message_json(m))
            return
        d = self.lat[m.src][m.dst]
        self._schedule(self.now + d, "deliver", m)
        if cfg.duplicate and self.rng.random() < cfg.duplicate:
            self._schedule(self.now + d, "deliver", m)

    # -- fault injection (also usable directly between events) -------------

    def inject_crash(self, replica: int, lose_memory: bool = False) -> None:
        """Crash a replica now; a second crash of the same replica is a no-op."""
        self._on_crash(CrashEvent(self.now / US_PER_MS, replica, lose_memory))

    def restore(self, replica: int) -> None:
        """Bring a crashed replica back; durable state survived unless wiped."""
        self._on_restore(RestoreEvent(self.now / US_PER_MS, replica))

    # -- event handlers ---------------------------------------------------

    def _on_deliver(self, m) -> None:
        if m.dst == CLIENT:
            self._client_on_response(m)
            return
        if m.dst not in self.alive:
            self.drops += 1
            self._trace("drop", why="crashed", msg=multi.message_json(m))
            return
        self.recv[m.dst] += 1
        self._trace("deliver", msg=multi.message_json(m))
        rep = self.replicas[m.dst]
        out = rep.on_message(m, self.reachable(m.dst))
        self._dispatch(out, owner=rep)
        if isinstance(m, multi.SlotPropose):
            self._check_slot(m.slot)
        if isinstance(m, multi.LeaderPromise) and rep.leading and self.leader_id != rep.id:
            self._leader_established(rep.id)

    def _on_crash(self, ev: CrashEvent) -> None:
        if ev.replica not in self.alive:
            return  # double crash is idempotent
        self.alive.discard(ev.replica)
        self.replicas[ev.replica].crash(lose_memory=ev.lose_memory)
        self._trace("crash", replica=ev.replica, wipe=ev.lose_memory)
        if self.leader_id == ev.replica:
            self.leader_id = None

    def _on_restore(self, ev: RestoreEvent) -> None:
        if ev.replica in self.alive:
            return
        self.alive.add(ev.replica)
        self._trace("restore", replica=ev.replica)

    def _on_election(self, r: int) -> None:
        for rep in self.replicas:
            rep.demote()
        self.intended = r
        if self.leader_id is not None:
            self.leader_id = None
        if r not in self.alive:
            self._trace("election", replica=r, note="crashed")
            return
        msgs = self.replicas[r].become_leader(self.reachable(r))
        self._trace("election", replica=r, round=self.replicas[r].seen_round)
        self._dispatch(msgs, owner=self.replicas[r])
        self._schedule(self.now + ms_to_us(self.cfg.election_retry_ms), "election_retry", r)

    def _on_election_retry(self, r: int) -> None:
        if self.intended != r or self.replicas[r].leading:
            return
        if r in self.alive:
            msgs = self.replicas[r].become_leader(self.reachable(r))
            self._trace("election", replica=r, round=self.replicas[r].seen_round)
            self._dispatch(msgs, owner=self.replicas[r])
        self._schedule(self.now + ms_to_us(self.cfg.election_retry_ms), "election_retry", r)

    def _on_retransmit(self, key) -> None:
        r, slot = key
        self.pending_retransmit.discard(key)
        rep = self.replicas[r]
        if r not in self.alive or not rep.leading or slot not in rep.inflight:
            return
        msgs = rep.retransmit(slot, self.reachable(r))
        if msgs:
            self._trace("retransmit", replica=r, slot=slot)
        self._dispatch(msgs, owner=rep)
        self._arm_retransmit(r, slot)

    def _on_partition(self, groups) -> None:
        if groups:
            self.partition = {}
            for gi, group in enumerate(groups):
                for a in group:
                    self.partition[a] = gi
        else:
            self.partition = None
        self._trace("partition", groups=[list(g) for g in groups])

    # -- leader / client ---------------------------------------------------

    def _leader_established(self, r: int) -> None:
        self.leader_id = r
        self._trace("leader", replica=r, ballot=self.replicas[r].ballot.json())
        if not self.client_started:
            self.client_started = True
            for _ in range(self.cfg.window):
                self._client_submit_new()
        else:
            for req_id in sorted(self.outstanding):
                _, payload = self.outstanding[req_id]
                self._send(_request_to(self.leader_id, req_id, payload))
            while self.now < self.end_us and len(self.outstanding) < self.cfg.window:
                self._client_submit_new()  # top the window back up after churn

    def _client_submit_new(self) -> None:
        if self.now >= self.end_us or self.leader_id is None:
            return
        req_id = f"r{self.req_seq:06d}"
        self.req_seq += 1
        payload = (req_id + ":").ljust(self.cfg.request_size, "x")
        self.outstanding[req_id] = (self.now, payload)
        self._send(_request_to(self.leader_id, req_id, payload))

    def _client_on_response(self, m: multi.Response) -> None:
        if m.req_id not in self.outstanding:
            self._trace("duplicate_response", req=m.req_id, slot=m.slot)
            return
        submit_us, payload = self.outstanding.pop(m.req_id)
        if m.payload != payload:
            raise SafetyViolationError(m.slot, [payload, m.payload], self.trace)
        latency = self.now - submit_us
        self.responses[m.req_id] = (self.now, m.slot, latency)
        self._trace("response", req=m.req_id, slot=m.slot, latency_us=latency)
        self._client_submit_new()

    # -- online safety ------------------------------------------------------

    def _check_slot(self, slot: int) -> None:
        states = {
            i: core.AcceptorState(promised=rep.promised, accepted=rep.accepted.get(slot))
            for i, rep in enumerate(self.replicas)
        }
        pairs = core.decided_proposals(states, self.cfg.quorum)
        for b, v in pairs:
            prev = self.registry.get(slot)
            if prev is None:
                self.registry[slot] = v
                self.decided_at[slot] = (self.now, v)
                self._trace("decide", slot=slot, ballot=b.json(), value=v)
            elif prev != v:
                self._trace("violation", slot=slot, values=[prev, v])
                raise SafetyViolationError(slot, [prev, v], self.trace)

    # -- metrics -------------------------------------------------------------

    def _metrics(self) -> RunMetrics:
        cfg = self.cfg
        lo = ms_to_us(cfg.warmup_ms)
        hi = self.end_us - ms_to_us(cfg.cooldown_ms)
        in_window = [
            (slot, lat_us)
            for (t, slot, lat_us) in self.responses.values()
            if lo <= t < hi
        ]
        lats_ms = sorted(l / US_PER_MS for _, l in in_window)
        committed = len(in_window)
        window_s = (hi - lo) / 1_000_000
        slots = [s for s, _ in in_window]
        total_msgs = [self.slot_proto[s] + self.slot_client[s] for s in slots]
        proto_msgs = [self.slot_proto[s] for s in slots]
        return RunMetrics(
            n=cfg.n,
            kind=cfg.quorum.kind,
            q1=cfg.quorum.min_q1_size(),
            q2=cfg.quorum.min_q2_size(),
            seed=cfg.seed,
            committed=committed,
            throughput=committed / window_s,
            mean_latency_ms=_mean(lats_ms),
            median_latency_ms=_pctl(lats_ms, 0.5),
            p99_latency_ms=_pctl(lats_ms, 0.99),
            msgs_per_commit=_mean(total_msgs),
            protocol_msgs_per_commit=_mean(proto_msgs),
            message_counts=dict(self.msg_counts),
            per_replica_sent=tuple(self.sent),
            per_replica_received=tuple(self.recv),
            nacks=self.nacks,
            drops=self.drops,
            decided_slots=len(self.registry),
            noop_slots=sum(1 for v in self.registry.values() if v == NOOP),
        )


def _request_to(leader_id: int, req_id: str, payload: str) -> multi.Request:
    return multi.Request(src=CLIENT, dst=leader_id, req_id=req_id, payload=payload)


def run(cfg: SimConfig):
    """Execute one world; returns (metrics, trace lines).

    Raises :class:`SafetyViolationError` if any slot ever resolves to two
    different values (impossible for quorum systems with cross-phase
    intersection and durable acceptors).
    """
    world = World(cfg)
    metrics = world.run()
    return metrics, world.trace


def commit_times_us(trace) -> list:
    """Response timestamps from a trace, for windowed commit-rate asserts."""
    return [l["t"] for l in trace if l["ev"] == "response"]
