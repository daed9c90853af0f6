import pytest
from hypothesis import given, settings, strategies as st

from vdlt.governance import (
    Amendment,
    AmendmentState,
    Ballot,
    IllegalTransition,
    InsufficientUnlocked,
    InvalidMultiplier,
    PollsClosed,
    StakeLedger,
    TestPeriodElapsed as Elapsed,
    VoteClosed,
    advance_amendment,
    qv_cost,
    tally_delegates,
)

S = AmendmentState
ALL_YES = PollsClosed({f: True for f in ("roadmap", "core_developers", "token_holders", "users", "norms")})


@pytest.mark.parametrize("v, cost", [(3, 9), (4, 16), (0, 0)])
def test_qv_cost(v, cost):
    assert qv_cost(v) == cost


@given(st.integers(0, 10_000))
def test_marginal_cost_grows(v):
    assert qv_cost(v + 1) - qv_cost(v) == 2 * v + 1


def test_cast_vote_four_tokens_k2():
    led = StakeLedger({"h": 10})
    b = led.cast_vote("h", "c", 4, 2, now=0)
    assert b.votes == 8
    assert led.locks[0].expiry == 4
    assert led.balance("h") == 6 and led.locked("h") == 4


def test_cast_vote_k1():
    b = StakeLedger({"h": 10}).cast_vote("h", "c", 10, 1, now=0)
    assert b.votes == 10


def test_cast_vote_errors():
    with pytest.raises(InsufficientUnlocked):
        StakeLedger({"h": 5}).cast_vote("h", "c", 6, 1, 0)
    with pytest.raises(InvalidMultiplier):
        StakeLedger({"h": 5}).cast_vote("h", "c", 1, 0, 0)


def test_doubling_k_quadruples_lock():
    led = StakeLedger({"h": 100})
    a = led.cast_vote("h", "c", 10, 2, 0)
    b = led.cast_vote("h", "c", 10, 4, 0)
    assert led.locks[1].expiry == 4 * led.locks[0].expiry
    assert b.votes == 2 * a.votes


def test_expire_locks_boundary():
    led = StakeLedger({"h": 10})
    led.cast_vote("h", "c", 4, 2, 0)
    assert led.expire_locks(3) == 0
    assert led.expire_locks(4) == 4
    assert led.expire_locks(100) == 0


def test_tally_examples():
    ballots = [Ballot("x", "A", 8), Ballot("y", "B", 10), Ballot("z", "C", 3)]
    assert tally_delegates(ballots, 2) == ["B", "A"]
    assert tally_delegates([Ballot("x", "B", 5), Ballot("y", "A", 5)], 1) == ["A"]
    assert tally_delegates([], 3) == []


@given(st.lists(st.tuples(st.sampled_from("ABCDE"), st.integers(1, 50)), min_size=1), st.integers(2, 5))
def test_tally_invariant_under_uniform_scaling(votes, scale):
    ballots = [Ballot("v", t, n) for t, n in votes]
    scaled = [Ballot("v", t, n * scale) for t, n in votes]
    assert tally_delegates(ballots, 3) == tally_delegates(scaled, 3)


def test_full_amendment_pipeline():
    a = advance_amendment(Amendment("a"), ALL_YES)
    assert a.state is S.POLLED
    a = advance_amendment(a, VoteClosed(10, 2))
    assert a.state is S.ON_TEST
    a = advance_amendment(a, Elapsed())
    a = advance_amendment(a, VoteClosed(5, 1))
    assert a.state is S.LIVE
    assert a.history == (S.PROPOSED, S.POLLED, S.VOTE1_PASSED, S.ON_TEST, S.VOTE2_PASSED, S.LIVE)


def test_amendment_gates():
    polled = advance_amendment(Amendment("a"), ALL_YES)
    assert advance_amendment(polled, VoteClosed(10, 12)).state is S.REJECTED
    on_test = advance_amendment(polled, VoteClosed(3, 1))
    with pytest.raises(IllegalTransition):
        advance_amendment(on_test, VoteClosed(3, 1))
    one_no = PollsClosed({**ALL_YES.results, "users": False})
    assert advance_amendment(Amendment("b"), one_no).state is S.REJECTED


def test_rejected_is_terminal():
    dead = advance_amendment(Amendment("a"), PollsClosed({}))
    for ev in (ALL_YES, VoteClosed(1, 0), Elapsed()):
        with pytest.raises(IllegalTransition):
            advance_amendment(dead, ev)


ops = st.lists(
    st.one_of(
        st.tuples(st.just("cast"), st.integers(0, 3), st.integers(1, 60), st.integers(1, 4)),
        st.tuples(st.just("tick"), st.integers(0, 5), st.just(0), st.just(0)),
    ),
    max_size=80,
)


@settings(max_examples=150)
@given(ops)
def test_stake_conservation_per_holder(seq):
    holders = ["h0", "h1", "h2", "h3"]
    led = StakeLedger({h: 100 for h in holders})
    now = 0
    for kind, a, b, c in seq:
        if kind == "cast":
            try:
                led.cast_vote(holders[a], "cand", b, c, now)
            except InsufficientUnlocked:
                pass
        else:
            now += a
            led.expire_locks(now)
        for h in holders:
            assert led.total(h) == 100
            assert led.balance(h) >= 0
