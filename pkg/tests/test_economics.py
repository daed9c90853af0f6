from fractions import Fraction

import pytest
from hypothesis import given, settings, strategies as st

from vdlt.economics import (
    Economy,
    InvalidEvidence,
    NoBids,
    NoCollateral,
    NoParticipants,
    PenaltyEvidence,
    RateExceedsCap,
    RewardBid,
    TokenSupply,
    activity_score,
    distribute,
    epoch_mint,
    required_stake,
    reward_amount,
)
from vdlt.governance import StakeLedger


def test_annual_mint_of_one_billion():
    s = TokenSupply(epochs_per_year=1)
    assert epoch_mint(s) == 40_000_000
    assert s.total == 1_040_000_000


def test_zero_rate_mints_nothing():
    assert epoch_mint(TokenSupply(rate=0)) == 0


def test_rate_above_cap():
    with pytest.raises(RateExceedsCap):
        TokenSupply(rate=0.05)
    s = TokenSupply()
    with pytest.raises(RateExceedsCap):
        s.set_rate(0.041)


@pytest.mark.parametrize("epy", [1, 4, 12, 52])
def test_supply_never_outruns_the_cap(epy):
    s = TokenSupply(epochs_per_year=epy)
    for t in range(1, 3 * epy + 1):
        epoch_mint(s)
        assert s.total <= s.cap_at(t)
    # and compounding gets within a rounding hair of the full 4% a year
    assert s.total >= s.cap_at(3 * epy) - 3 * epy


@pytest.mark.parametrize("bids, r", [([1, 2, 100], 2), ([4], 4), ([2, 4], 3)])
def test_reward_median(bids, r):
    assert reward_amount([RewardBid(f"c{i}", b) for i, b in enumerate(bids)]) == r


def test_no_bids():
    with pytest.raises(NoBids):
        reward_amount([])


@given(st.lists(st.floats(0, 1000), min_size=1, max_size=20), st.randoms())
def test_median_permutation_invariant(pays, rnd):
    bids = [RewardBid(str(i), p) for i, p in enumerate(pays)]
    shuffled = list(bids)
    rnd.shuffle(shuffled)
    assert reward_amount(bids) == reward_amount(shuffled)


def test_distribute_examples():
    assert distribute(100, [("A", 1), ("B", 1)]) == {"A": 50, "B": 50}
    assert distribute(100, [("A", 1), ("B", 0)]) == {"A": 100, "B": 0}
    assert distribute(0, [("A", 1), ("B", 0.5)]) == {"A": 0, "B": 0}
    with pytest.raises(NoParticipants):
        distribute(10, [])


def test_remainder_goes_to_most_active():
    out = distribute(10, [("B", 1), ("A", 1), ("C", 1)])
    assert sum(out.values()) == 10
    assert out["A"] == 4


@given(st.integers(0, 10**9), st.lists(st.tuples(st.text(min_size=1, max_size=3), st.floats(0, 1)),
                                      min_size=1, max_size=10, unique_by=lambda p: p[0]))
def test_distribute_sums_exactly(minted, parts):
    out = distribute(minted, parts)
    assert all(v >= 0 for v in out.values())
    if any(a > 0 for _, a in parts):
        assert sum(out.values()) == minted
    for pid, a in parts:
        if a == 0:
            assert out[pid] == 0


def economy_with_collateral(c=100):
    econ = Economy(StakeLedger({"treasury": 1_000_000_000 - 200, "off": 100, "rep": 100}))
    econ.post_collateral("off", c)
    return econ


def test_slash_split():
    econ = economy_with_collateral()
    econ.log.record("off", "equivocation", "d1")
    assert econ.slash(PenaltyEvidence("off", "d1", "rep"), 0.5) == (-100, 50)
    assert econ.burned == 50
    assert econ.stake.balance("rep") == 150
    assert econ.collateral["off"] == 0
    assert econ.conserved()


def test_slash_errors():
    econ = economy_with_collateral()
    with pytest.raises(InvalidEvidence):
        econ.slash(PenaltyEvidence("off", "nope", "rep"))
    econ.log.record("off", "equivocation", "d1")
    econ.slash(PenaltyEvidence("off", "d1", "rep"))
    with pytest.raises(NoCollateral):
        econ.slash(PenaltyEvidence("off", "d1", "rep"))


@settings(max_examples=50)
@given(st.lists(st.tuples(st.sampled_from(["mint", "lock", "expire", "slash", "post"]), st.integers(0, 50)),
                max_size=40))
def test_conservation_under_random_operations(seq):
    econ = Economy(StakeLedger({"treasury": 999_000, "a": 500, "b": 500}), TokenSupply(epochs_per_year=12))
    econ.supply.total = econ.supply.genesis = 1_000_000
    now = 0
    for op, x in seq:
        if op == "mint":
            econ.mint()
            econ.pay_rewards(x * 10, [("a", 1.0), ("b", x / 50)])
        elif op == "lock" and econ.stake.balance("a") > x:
            econ.stake.cast_vote("a", "cand", x + 1, 1 + x % 3, now)
        elif op == "expire":
            now += x % 5
            econ.stake.expire_locks(now)
        elif op == "post" and econ.stake.balance("b") >= x:
            econ.post_collateral("b", x)
        elif op == "slash" and econ.collateral.get("b", 0) > 0:
            econ.log.record("b", "equivocation", f"d{x}")
            econ.slash(PenaltyEvidence("b", f"d{x}", "a"), Fraction(x % 11, 10))
        assert econ.conserved()
        assert all(v >= 0 for v in econ.collateral.values())


def test_stake_and_activity_helpers():
    assert required_stake(10.5, 2) == 21
    assert activity_score([True, False] * 10) == 0.5
    assert activity_score([]) == 0.0
    assert activity_score([False] * 5 + [True] * 10) == 1.0
