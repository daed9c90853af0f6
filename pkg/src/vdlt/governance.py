"""Delegate elections by quadratic voting with token lock, and the amendment pipeline."""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, replace
from enum import Enum
from typing import Iterable, Mapping, Optional, Union

FACTOR_GROUPS = ("roadmap", "core_developers", "token_holders", "users", "norms")


class InsufficientUnlocked(ValueError):
    pass


class InvalidMultiplier(ValueError):
    pass


class IllegalTransition(ValueError):
    pass


def qv_cost(v: int) -> int:
    """Cost of casting ``v`` votes on a fee-based poll."""
    if v < 0:
        raise ValueError("vote count must be >= 0")
    return v * v


@dataclass(frozen=True)
class TokenLock:
    holder: str
    tokens: int
    k: int
    created_at: int
    expiry: int

    @property
    def votes(self) -> int:
        return self.tokens * self.k


@dataclass(frozen=True)
class Ballot:
    voter: str
    target: str
    votes: int
    direction: str = "for"

    def __post_init__(self) -> None:
        if self.votes <= 0:
            raise ValueError("a ballot carries a positive number of votes")
        if self.direction not in ("for", "against"):
            raise ValueError(f"unknown ballot direction {self.direction!r}")


class StakeLedger:
    """Unlocked balances plus outstanding token locks.

    ``lock_period`` is the length of one lock period in the caller's time unit.
    """

    def __init__(self, balances: Optional[Mapping[str, int]] = None, lock_period: int = 1):
        if lock_period < 1:
            raise ValueError("lock_period must be >= 1")
        self.balances: dict[str, int] = defaultdict(int)
        for holder, amount in (balances or {}).items():
            if amount < 0:
                raise ValueError(f"negative balance for {holder}")
            self.balances[holder] = int(amount)
        self.locks: list[TokenLock] = []
        self.lock_period = lock_period

    def balance(self, holder: str) -> int:
        return self.balances.get(holder, 0)

    def locked(self, holder: Optional[str] = None) -> int:
        return sum(l.tokens for l in self.locks if holder is None or l.holder == holder)

    def total(self, holder: Optional[str] = None) -> int:
        if holder is None:
            return sum(self.balances.values()) + self.locked()
        return self.balance(holder) + self.locked(holder)

    def credit(self, holder: str, amount: int) -> None:
        if amount < 0:
            raise ValueError("credit must be non-negative")
        self.balances[holder] += amount

    def debit(self, holder: str, amount: int) -> None:
        if amount < 0 or self.balance(holder) < amount:
            raise InsufficientUnlocked(f"{holder} has {self.balance(holder)} unlocked, needs {amount}")
        self.balances[holder] -= amount

    def cast_vote(
        self,
        holder: str,
        target: str,
        tokens: int,
        k: int,
        now: int,
        direction: str = "for",
    ) -> Ballot:
        """Lock ``tokens`` for k^2 periods in exchange for ``tokens * k`` votes."""
        if int(k) != k or k < 1:
            raise InvalidMultiplier(f"multiplier must be a positive integer, got {k}")
        if tokens < 1:
            raise ValueError("must lock at least one token")
        if self.balance(holder) < tokens:
            raise InsufficientUnlocked(
                f"{holder} has {self.balance(holder)} unlocked tokens, wants to lock {tokens}"
            )
        self.balances[holder] -= tokens
        lock = TokenLock(holder, tokens, k, now, now + k * k * self.lock_period)
        self.locks.append(lock)
        return Ballot(holder, target, lock.votes, direction)

    def expire_locks(self, now: int) -> int:
        released = 0
        keep = []
        for lock in self.locks:
            if lock.expiry <= now:
                self.balances[lock.holder] += lock.tokens
                released += lock.tokens
            else:
                keep.append(lock)
        self.locks = keep
        return released


def vote_totals(ballots: Iterable[Ballot]) -> dict[str, int]:
    totals: dict[str, int] = defaultdict(int)
    for b in ballots:
        totals[b.target] += b.votes if b.direction == "for" else -b.votes
    return dict(totals)


def tally_delegates(ballots: Iterable[Ballot], m: int) -> list[str]:
    if m < 1:
        raise ValueError("delegate count must be >= 1")
    totals = vote_totals(ballots)
    ranked = sorted(totals, key=lambda c: (-totals[c], c))
    return ranked[:m]


# -- amendments ---------------------------------------------------------------


class AmendmentState(Enum):
    PROPOSED = "proposed"
    POLLED = "polled"
    VOTE1_PASSED = "vote1_passed"
    ON_TEST = "on_test"
    VOTE2_PASSED = "vote2_passed"
    LIVE = "live"
    REJECTED = "rejected"


@dataclass(frozen=True)
class PollsClosed:
    results: Mapping[str, bool]


@dataclass(frozen=True)
class VoteClosed:
    votes_for: int
    votes_against: int


@dataclass(frozen=True)
class TestPeriodElapsed:
    pass


AmendmentEvent = Union[PollsClosed, VoteClosed, TestPeriodElapsed]


@dataclass(frozen=True)
class Amendment:
    id: str
    label: str = ""
    state: AmendmentState = AmendmentState.PROPOSED
    poll_results: tuple = ()
    test_elapsed: bool = False
    history: tuple = (AmendmentState.PROPOSED,)

    def _go(self, *states: AmendmentState, **changes) -> Amendment:
        return replace(self, state=states[-1], history=self.history + states, **changes)


def advance_amendment(
    a: Amendment,
    event: AmendmentEvent,
    factors: Iterable[str] = FACTOR_GROUPS,
    required_approvals: Optional[int] = None,
) -> Amendment:
    """One step through propose -> polls -> vote -> test -> vote -> live.

    A passing first vote moves straight on to the test deployment, and a
    passing second vote straight to live; both pass-through states are kept
    in ``history``.
    """
    S = AmendmentState
    factors = tuple(factors)
    if a.state is S.PROPOSED and isinstance(event, PollsClosed):
        need = len(factors) if required_approvals is None else required_approvals
        approvals = sum(1 for f in factors if event.results.get(f, False))
        results = tuple(sorted((f, bool(event.results.get(f, False))) for f in factors))
        if approvals >= need:
            return a._go(S.POLLED, poll_results=results)
        return a._go(S.REJECTED, poll_results=results)
    if a.state is S.POLLED and isinstance(event, VoteClosed):
        if event.votes_for > event.votes_against:
            return a._go(S.VOTE1_PASSED, S.ON_TEST)
        return a._go(S.REJECTED)
    if a.state is S.ON_TEST and isinstance(event, TestPeriodElapsed):
        return replace(a, test_elapsed=True)
    if a.state is S.ON_TEST and isinstance(event, VoteClosed):
        if not a.test_elapsed:
            raise IllegalTransition(f"amendment {a.id}: confirmation vote before the test period elapsed")
        if event.votes_for > event.votes_against:
            return a._go(S.VOTE2_PASSED, S.LIVE)
        return a._go(S.REJECTED)
    raise IllegalTransition(f"amendment {a.id}: {type(event).__name__} not allowed in state {a.state.value}")
