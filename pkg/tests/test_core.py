import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fpaxos import core
from fpaxos.core import (
    Accept,
    AcceptorState,
    AgreementViolation,
    Ballot,
    Nack,
    Prepare,
    Promise,
    Propose,
    acceptor_handle_prepare,
    acceptor_handle_propose,
    choose_value,
    learner_decided,
    make_proposer,
    proposer_on_accept,
    proposer_on_nack,
    proposer_on_promise,
    proposer_retry,
    proposer_start,
)
from fpaxos.quorum import make_grid, make_majority

B = Ballot
P1, P2 = 100, 101  # proposer ids used in scenarios


def prep(b, src=P1, dst=0):
    return Prepare(src=src, dst=dst, ballot=b)


def prop(b, v, src=P1, dst=0):
    return Propose(src=src, dst=dst, ballot=b, value=v)


# ---------------------------------------------------------------- acceptor


def test_prepare_fresh_promises():
    st0 = AcceptorState()
    st1, reply = acceptor_handle_prepare(st0, prep(B(1, P1)))
    assert st1.promised == B(1, P1)
    assert reply == Promise(src=0, dst=P1, ballot=B(1, P1), accepted=None)


def test_prepare_stale_nacks_and_keeps_state():
    st0 = AcceptorState(promised=B(2, P2))
    st1, reply = acceptor_handle_prepare(st0, prep(B(1, P1)))
    assert st1 == st0
    assert reply == Nack(src=0, dst=P1, ballot=B(1, P1), promised=B(2, P2))


def test_prepare_carries_accepted_pair():
    st0 = AcceptorState(promised=B(1, P1), accepted=(B(1, P1), "a"))
    st1, reply = acceptor_handle_prepare(st0, prep(B(2, P2), src=P2))
    assert st1.promised == B(2, P2)
    assert st1.accepted == (B(1, P1), "a")
    assert reply.accepted == (B(1, P1), "a")


def test_propose_accepts_at_promise():
    st0 = AcceptorState(promised=B(1, P1))
    st1, reply = acceptor_handle_propose(st0, prop(B(1, P1), "a"))
    assert st1.accepted == (B(1, P1), "a")
    assert reply == Accept(src=0, dst=P1, ballot=B(1, P1))


def test_propose_below_promise_nacks():
    st0 = AcceptorState(promised=B(2, P2))
    st1, reply = acceptor_handle_propose(st0, prop(B(1, P1), "a"))
    assert st1 == st0
    assert isinstance(reply, Nack) and reply.promised == B(2, P2)


def test_propose_duplicate_reaccepts():
    st0 = AcceptorState(promised=B(1, P1), accepted=(B(1, P1), "a"))
    st1, reply = acceptor_handle_propose(st0, prop(B(1, P1), "a"))
    assert st1 == st0
    assert isinstance(reply, Accept)


def test_propose_without_prior_prepare_is_allowed():
    st1, reply = acceptor_handle_propose(AcceptorState(), prop(B(3, P1), "z"))
    assert st1.promised == B(3, P1)
    assert isinstance(reply, Accept)


# ---------------------------------------------------------------- proposer


def test_start_emits_prepares_to_q1():
    qs = make_majority(4, improved=True)
    ps = make_proposer(P1, 1, "a")
    ps1, msgs = proposer_start(ps, qs, {0, 1, 2})
    assert ps1.phase == core.PHASE1
    assert [m.dst for m in msgs] == [0, 1, 2]
    assert all(isinstance(m, Prepare) and m.ballot == B(1, P1) for m in msgs)


def test_start_single_acceptor():
    qs = make_majority(1)
    _, msgs = proposer_start(make_proposer(P1, 1, "a"), qs, {0})
    assert len(msgs) == 1


def test_start_rejects_non_q1_targets():
    qs = make_majority(4, improved=True)
    with pytest.raises(ValueError):
        proposer_start(make_proposer(P1, 1, "a"), qs, {0, 1})


def test_quorum_restricted_prepare_count():
    from fpaxos.quorum import make_simple, select_quorum

    qs = make_simple(10, 3)
    targets = select_quorum(qs, 1, range(10))
    _, msgs = proposer_start(make_proposer(P1, 1, "a"), qs, targets)
    assert len(msgs) == 8


def feed_promises(ps, qs, promises, q2_targets=None):
    msgs = []
    for src, accepted in promises:
        ps, out = proposer_on_promise(
            ps, qs, Promise(src=src, dst=ps.proposer_id, ballot=ps.ballot, accepted=accepted),
            q2_targets=q2_targets,
        )
        msgs.extend(out)
    return ps, msgs


def test_promise_quorum_adopts_prior_value():
    qs = make_majority(4, improved=True)
    ps, _ = proposer_start(make_proposer(P2, 2, "b"), qs, {1, 2, 3})
    ps, msgs = feed_promises(
        ps, qs, [(3, None), (2, None), (1, (B(1, P1), "a"))], q2_targets={2, 3}
    )
    assert ps.phase == core.PHASE2
    assert ps.chosen_value == "a"
    assert sorted(m.dst for m in msgs) == [2, 3]
    assert all(m.value == "a" for m in msgs)


def test_promise_quorum_uses_candidate_when_clean():
    qs = make_majority(4, improved=True)
    ps, _ = proposer_start(make_proposer(P1, 1, "b"), qs, {0, 1, 2})
    ps, msgs = feed_promises(ps, qs, [(0, None), (1, None), (2, None)])
    assert ps.chosen_value == "b"
    assert len(msgs) == 2  # fixed-first phase-2 quorum of size 2


def test_promise_highest_ballot_wins():
    qs = make_majority(4, improved=True)
    ps, _ = proposer_start(make_proposer(P2, 4, "mine"), qs, {0, 1, 2})
    ps, _ = feed_promises(
        ps, qs, [(0, (B(1, P1), "a")), (1, (B(3, P1), "c")), (2, None)]
    )
    assert ps.chosen_value == "c"


def test_promise_stale_ballot_ignored():
    qs = make_majority(4, improved=True)
    ps, _ = proposer_start(make_proposer(P1, 2, "b"), qs, {0, 1, 2})
    stale = Promise(src=0, dst=P1, ballot=B(1, P1), accepted=None)
    ps2, msgs = proposer_on_promise(ps, qs, stale)
    assert ps2 == ps and msgs == []


def test_promise_after_phase2_ignored():
    qs = make_majority(4, improved=True)
    ps, _ = proposer_start(make_proposer(P1, 1, "b"), qs, {0, 1, 2, 3})
    ps, msgs = feed_promises(ps, qs, [(0, None), (1, None), (2, None)])
    assert ps.phase == core.PHASE2 and msgs
    ps2, msgs2 = proposer_on_promise(
        ps, qs, Promise(src=3, dst=P1, ballot=ps.ballot, accepted=None)
    )
    assert ps2 == ps and msgs2 == []


def test_accepts_reach_decision_on_q2():
    qs = make_majority(4, improved=True)
    ps, _ = proposer_start(make_proposer(P1, 1, "a"), qs, {0, 1, 2})
    ps, _ = feed_promises(ps, qs, [(0, None), (1, None), (2, None)])
    ps = proposer_on_accept(ps, qs, Accept(src=0, dst=P1, ballot=ps.ballot))
    assert ps.phase == core.PHASE2
    ps = proposer_on_accept(ps, qs, Accept(src=1, dst=P1, ballot=ps.ballot))
    assert ps.phase == core.DECIDED


def test_accepts_grid_column_decides():
    qs = make_grid(4, 5, mode="fpaxos")
    ps, _ = proposer_start(make_proposer(P1, 1, "a"), qs, qs.row(0))
    ps, _ = feed_promises(ps, qs, [(a, None) for a in sorted(qs.row(0))], q2_targets=qs.col(2))
    for a in sorted(qs.col(2)):
        ps = proposer_on_accept(ps, qs, Accept(src=a, dst=P1, ballot=ps.ballot))
    assert ps.phase == core.DECIDED


def test_nack_then_retry_bumps_round():
    qs = make_majority(4, improved=True)
    ps, _ = proposer_start(make_proposer(P1, 1, "a"), qs, {0, 1, 2})
    ps = proposer_on_nack(ps, Nack(src=0, dst=P1, ballot=ps.ballot, promised=B(5, P2)))
    ps, msgs = proposer_retry(ps, qs, {0, 1, 2})
    assert ps.ballot.round == 6
    assert len(msgs) == 3


# ----------------------------------------------------------------- learner


def test_learner_examples():
    qs = make_majority(4, improved=True)
    states = {
        0: AcceptorState(promised=B(1, P1), accepted=(B(1, P1), "a")),
        1: AcceptorState(promised=B(2, P2), accepted=(B(2, P2), "a")),
        2: AcceptorState(promised=B(2, P2), accepted=(B(2, P2), "a")),
        3: AcceptorState(promised=B(2, P2), accepted=(B(2, P2), "a")),
    }
    assert learner_decided(states, qs) == (B(2, P2), "a")

    empty = {i: AcceptorState() for i in range(4)}
    assert learner_decided(empty, qs) is None

    lone = dict(empty)
    lone[0] = AcceptorState(promised=B(1, P1), accepted=(B(1, P1), "a"))
    assert learner_decided(lone, qs) is None


def test_learner_flags_conflicting_quorums():
    from fpaxos.quorum import make_explicit

    qs = make_explicit(2, [[0]], [[0], [1]])
    states = {
        0: AcceptorState(promised=B(1, P1), accepted=(B(1, P1), "x")),
        1: AcceptorState(promised=B(2, P2), accepted=(B(2, P2), "y")),
    }
    with pytest.raises(AgreementViolation):
        learner_decided(states, qs)


def test_choose_value_rule():
    assert choose_value([None, None], "mine") == "mine"
    assert choose_value([(B(1, 0), "a"), None, (B(3, 0), "c")], "mine") == "c"


# --------------------------------------------------------------- properties


@settings(deadline=None, max_examples=120)
@given(seed=st.integers(0, 2**32 - 1), steps=st.integers(1, 40))
def test_acceptor_ballots_never_decrease(seed, steps):
    rng = random.Random(seed)
    st0 = AcceptorState()
    for _ in range(steps):
        b = B(rng.randint(0, 5), rng.randint(0, 2))
        if rng.random() < 0.5:
            st1, _ = acceptor_handle_prepare(st0, prep(b, src=b.proposer))
        else:
            st1, _ = acceptor_handle_propose(st0, prop(b, rng.choice("xyz"), src=b.proposer))
        if st0.promised is not None:
            assert st1.promised >= st0.promised
        if st0.accepted is not None:
            assert st1.accepted[0] >= st0.accepted[0]
        if st1.accepted is not None and st1.promised is not None:
            assert st1.accepted[0] <= st1.promised
        st0 = st1


@settings(deadline=None, max_examples=60)
@given(seed=st.integers(0, 2**32 - 1))
def test_proposer_never_proposes_before_q1_or_decides_before_q2(seed):
    rng = random.Random(seed)
    qs = make_majority(rng.randint(1, 6), improved=rng.random() < 0.5)
    ps, _ = proposer_start(make_proposer(P1, 1, "v"), qs, qs.universe)
    proposed = False
    for a in rng.sample(range(qs.n), qs.n):
        ps, out = proposer_on_promise(
            ps, qs, Promise(src=a, dst=P1, ballot=ps.ballot, accepted=None)
        )
        if out:
            proposed = True
            assert qs.is_q1(frozenset(ps.promises))
    assert proposed  # full universe always reaches a phase-1 quorum
    acks = set()
    for a in rng.sample(range(qs.n), qs.n):
        before = ps.phase
        ps = proposer_on_accept(ps, qs, Accept(src=a, dst=P1, ballot=ps.ballot))
        acks.add(a)
        if ps.phase == core.DECIDED and before != core.DECIDED:
            assert qs.is_q2(frozenset(acks))


@settings(deadline=None, max_examples=40)
@given(seed=st.integers(0, 2**32 - 1))
def test_replaying_a_message_log_is_deterministic(seed):
    rng = random.Random(seed)
    log = []
    for _ in range(30):
        b = B(rng.randint(0, 4), rng.randint(0, 1))
        if rng.random() < 0.5:
            log.append(prep(b, src=b.proposer))
        else:
            log.append(prop(b, rng.choice("pq"), src=b.proposer))

    def run():
        st0 = AcceptorState()
        replies = []
        for m in log:
            if isinstance(m, Prepare):
                st0, r = acceptor_handle_prepare(st0, m)
            else:
                st0, r = acceptor_handle_propose(st0, m)
            replies.append(r)
        return st0, replies

    assert run() == run()


def test_message_json_shape():
    m = Propose(src="P1", dst="A2", ballot=B(2, 1), value="a")
    assert core.message_json(m) == {
        "type": "propose",
        "ballot": [2, 1],
        "value": "a",
        "src": "P1",
        "dst": "A2",
    }
