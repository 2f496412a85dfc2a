"""Single-decree protocol state machines.

Pure transition functions over immutable acceptor and proposer states.
The caller (test harness, scripted scenario, or simulator) owns message
delivery and scheduling; every function here is deterministic in
(state, input).

Messages follow the classic two-phase shape: prepare/promise to win a
phase-1 quorum, propose/accept to commit a value on a phase-2 quorum.
Explicit nacks are an artifact addition so rejected proposers can react
promptly; they never change acceptor state, so safety is unaffected.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Mapping, Optional, Tuple, Union

from .quorum import QuorumSystem, select_quorum

Value = str

IDLE = "idle"
PHASE1 = "phase1"
PHASE2 = "phase2"
DECIDED = "decided"


class AgreementViolation(Exception):
    """Two phase-2 quorums hold different values: safety is broken."""

    def __init__(self, proposals):
        self.proposals = proposals
        super().__init__(f"conflicting decided proposals: {proposals}")


@dataclass(frozen=True, order=True)
class Ballot:
    """Totally ordered, proposer-unique proposal number."""

    round: int
    proposer: int

    def json(self) -> list:
        return [self.round, self.proposer]


@dataclass(frozen=True)
class AcceptorState:
    promised: Optional[Ballot] = None
    accepted: Optional[Tuple[Ballot, Value]] = None


# -- wire messages ------------------------------------------------------


@dataclass(frozen=True)
class Prepare:
    src: object
    dst: object
    ballot: Ballot


@dataclass(frozen=True)
class Promise:
    src: object
    dst: object
    ballot: Ballot
    accepted: Optional[Tuple[Ballot, Value]]


@dataclass(frozen=True)
class Propose:
    src: object
    dst: object
    ballot: Ballot
    value: Value


@dataclass(frozen=True)
class Accept:
    src: object
    dst: object
    ballot: Ballot


@dataclass(frozen=True)
class Nack:
    src: object
    dst: object
    ballot: Ballot
    promised: Ballot


Message = Union[Prepare, Promise, Propose, Accept, Nack]


def message_json(m: Message) -> dict:
    """Canonical trace form: type, ballot, payload fields, then addressing."""
    d = {"type": type(m).__name__.lower(), "ballot": m.ballot.json()}
    if isinstance(m, Promise):
        d["accepted"] = None if m.accepted is None else [m.accepted[0].json(), m.accepted[1]]
    elif isinstance(m, Propose):
        d["value"] = m.value
    elif isinstance(m, Nack):
        d["promised"] = m.promised.json()
    d["src"] = m.src
    d["dst"] = m.dst
    return d


# -- acceptor -----------------------------------------------------------


def acceptor_handle_prepare(st: AcceptorState, m: Prepare):
    """Promise the ballot if it beats every earlier promise, else nack."""
    if st.promised is None or m.ballot > st.promised:
        st2 = replace(st, promised=m.ballot)
        return st2, Promise(src=m.dst, dst=m.src, ballot=m.ballot, accepted=st.accepted)
    return st, Nack(src=m.dst, dst=m.src, ballot=m.ballot, promised=st.promised)


def acceptor_handle_propose(st: AcceptorState, m: Propose):
    """Accept at or above the promised ballot; re-accepting is idempotent."""
    if st.promised is None or m.ballot >= st.promised:
        st2 = AcceptorState(promised=m.ballot, accepted=(m.ballot, m.value))
        return st2, Accept(src=m.dst, dst=m.src, ballot=m.ballot)
    return st, Nack(src=m.dst, dst=m.src, ballot=m.ballot, promised=st.promised)


# -- proposer -----------------------------------------------------------


@dataclass(frozen=True)
class ProposerState:
    proposer_id: int
    ballot: Ballot
    phase: str = IDLE
    candidate_value: Optional[Value] = None
    promises: Mapping[int, Optional[Tuple[Ballot, Value]]] = None
    accepts: frozenset = frozenset()
    chosen_value: Optional[Value] = None
    seen_round: int = 0

    def __post_init__(self):
        if self.promises is None:
            object.__setattr__(self, "promises", {})


def make_proposer(proposer_id: int, round: int, candidate: Value) -> ProposerState:
    return ProposerState(
        proposer_id=proposer_id,
        ballot=Ballot(round, proposer_id),
        candidate_value=candidate,
        seen_round=round,
    )


def choose_value(promised_pairs, candidate: Value) -> Value:
    """The value of the highest-ballot accepted pair, else the candidate."""
    pairs = [p for p in promised_pairs if p is not None]
    if not pairs:
        return candidate
    return max(pairs, key=lambda p: p[0])[1]


def proposer_start(ps: ProposerState, qs: QuorumSystem, targets):
    """Enter phase 1 by preparing to a phase-1 quorum (or to everyone)."""
    targets = frozenset(targets)
    if targets != qs.universe and not qs.is_q1(targets):
        raise ValueError(f"prepare targets {sorted(targets)} do not contain a phase-1 quorum")
    ps2 = replace(ps, phase=PHASE1, promises={}, accepts=frozenset(), chosen_value=None)
    msgs = [Prepare(src=ps.proposer_id, dst=t, ballot=ps.ballot) for t in sorted(targets)]
    return ps2, msgs


def proposer_on_promise(ps: ProposerState, qs: QuorumSystem, m: Promise, q2_targets=None):
    """Record a promise; on the first full phase-1 quorum, start phase 2.

    The proposed value is forced to the highest-ballot accepted pair among
    the collected promises; only with a clean slate may the proposer use
    its own candidate.  ``q2_targets`` overrides the default fixed-first
    phase-2 quorum choice.
    """
    if ps.phase != PHASE1 or m.ballot != ps.ballot:
        return ps, []
    promises = dict(ps.promises)
    promises[m.src] = m.accepted
    ps2 = replace(ps, promises=promises)
    if not qs.is_q1(frozenset(promises)):
        return ps2, []
    value = choose_value(promises.values(), ps.candidate_value)
    if q2_targets is None:
        q2_targets = select_quorum(qs, 2, qs.universe)
    else:
        q2_targets = frozenset(q2_targets)
        if q2_targets != qs.universe and not qs.is_q2(q2_targets):
            raise ValueError(
                f"propose targets {sorted(q2_targets)} do not contain a phase-2 quorum"
            )
    ps3 = replace(ps2, phase=PHASE2, chosen_value=value)
    msgs = [
        Propose(src=ps.proposer_id, dst=t, ballot=ps.ballot, value=value)
        for t in sorted(q2_targets)
    ]
    return ps3, msgs


def proposer_on_accept(ps: ProposerState, qs: QuorumSystem, m: Accept) -> ProposerState:
    """Record an accept; a full phase-2 quorum means the value is decided."""
    if ps.phase not in (PHASE2, DECIDED) or m.ballot != ps.ballot:
        return ps
    accepts = ps.accepts | {m.src}
    phase = DECIDED if qs.is_q2(accepts) else ps.phase
    return replace(ps, accepts=accepts, phase=phase)


def proposer_on_nack(ps: ProposerState, m: Nack) -> ProposerState:
    """Track the highest round seen so a retry can outbid it."""
    return replace(ps, seen_round=max(ps.seen_round, m.promised.round))


def proposer_retry(ps: ProposerState, qs: QuorumSystem, targets):
    """Re-enter phase 1 with a round above everything observed."""
    round = max(ps.seen_round, ps.ballot.round) + 1
    ps2 = replace(
        ps,
        ballot=Ballot(round, ps.proposer_id),
        seen_round=round,
        phase=IDLE,
        chosen_value=None,
    )
    return proposer_start(ps2, qs, targets)


# -- learner ------------------------------------------------------------


def decided_proposals(states: Mapping[int, AcceptorState], qs: QuorumSystem):
    """All (ballot, value) pairs currently held by a full phase-2 quorum."""
    holders = {}
    for aid, st in states.items():
        if st.accepted is not None:
            holders.setdefault(st.accepted, set()).add(aid)
    return sorted(
        (pair for pair, who in holders.items() if qs.is_q2(frozenset(who))),
        key=lambda p: p[0],
    )


def learner_decided(states: Mapping[int, AcceptorState], qs: QuorumSystem):
    """The decided (ballot, value), or None.

    Raises :class:`AgreementViolation` if quorums hold different values,
    which the checker and simulator use to flag broken configurations.
    """
    qualifying = decided_proposals(states, qs)
    if not qualifying:
        return None
    if len({v for _, v in qualifying}) > 1:
        raise AgreementViolation(qualifying)
    return qualifying[-1]
