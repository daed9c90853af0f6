"""Token supply, reward sizing and distribution, collateral and slashing.

All token amounts are integers so that conservation audits are exact.
"""

from __future__ import annotations

import math
import statistics
from decimal import ROUND_FLOOR, Decimal, localcontext
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Optional, Sequence

from .governance import StakeLedger

GENESIS_SUPPLY = 1_000_000_000
INFLATION_CAP = Fraction(4, 100)


class RateExceedsCap(ValueError):
    pass


class NoBids(ValueError):
    pass


class NoParticipants(ValueError):
    pass


class InvalidEvidence(ValueError):
    pass


class NoCollateral(ValueError):
    pass


def _as_fraction(x) -> Fraction:
    return x if isinstance(x, Fraction) else Fraction(str(x))


@dataclass
class TokenSupply:
    total: int = GENESIS_SUPPLY
    rate: float = 0.04
    epochs_per_year: int = 1
    genesis: int = GENESIS_SUPPLY
    minted: int = 0

    def __post_init__(self) -> None:
        if self.epochs_per_year < 1:
            raise ValueError("epochs_per_year must be >= 1")
        self.check_rate(self.rate)

    @staticmethod
    def check_rate(rate) -> None:
        r = _as_fraction(rate)
        if r < 0:
            raise ValueError("inflation rate must be non-negative")
        if r > INFLATION_CAP:
            raise RateExceedsCap(f"annual rate {rate} exceeds the 4% cap")

    def set_rate(self, rate) -> None:
        self.check_rate(rate)
        self.rate = rate

    def cap_at(self, epochs: int) -> float:
        """Largest supply the 4% annualized cap allows after ``epochs`` epochs."""
        return self.genesis * (1 + float(INFLATION_CAP)) ** (epochs / self.epochs_per_year)


def epoch_mint(s: TokenSupply) -> int:
    """Mint one epoch of inflation and return the amount.

    The per-epoch growth factor compounds to exactly the annual rate over a
    year, so supply never runs ahead of the annualized curve mid-year.
    """
    s.check_rate(s.rate)
    if _as_fraction(s.rate) == 0:
        return 0
    if s.epochs_per_year == 1:
        minted = int(s.total * _as_fraction(s.rate))
    else:
        with localcontext() as ctx:
            ctx.prec = 50
            r = Decimal(str(s.rate))
            growth = ((1 + r).ln() / s.epochs_per_year).exp() - 1
            minted = int((s.total * growth).to_integral_value(rounding=ROUND_FLOOR))
    s.total += minted
    s.minted += minted
    return minted


@dataclass(frozen=True)
class RewardBid:
    contributor: str
    desired_pay: float

    def __post_init__(self) -> None:
        if self.desired_pay < 0:
            raise ValueError("desired pay must be non-negative")


def reward_amount(bids: Sequence[RewardBid]) -> float:
    if not bids:
        raise NoBids("no reward bids")
    return statistics.median(b.desired_pay for b in bids)


def distribute(minted: int, participants: Iterable[tuple[str, float]]) -> dict[str, int]:
    """Split ``minted`` in proportion to activity; zero-activity registrants get nothing.

    Integer payouts; the rounding remainder goes to the most active
    participant (lowest id on ties). If nobody was active all payouts are 0.
    """
    participants = list(participants)
    if not participants:
        raise NoParticipants("no participants to pay")
    if minted < 0:
        raise ValueError("minted must be non-negative")
    acts = {}
    for pid, a in participants:
        if not 0 <= a <= 1:
            raise ValueError(f"activity of {pid} outside [0, 1]")
        acts[pid] = _as_fraction(a)
    total = sum(acts.values())
    if total == 0 or minted == 0:
        return {pid: 0 for pid in acts}
    payouts = {pid: math.floor(minted * a / total) for pid, a in acts.items()}
    remainder = minted - sum(payouts.values())
    if remainder:
        top = min(acts, key=lambda pid: (-acts[pid], pid))
        payouts[top] += remainder
    return payouts


@dataclass(frozen=True)
class PenaltyEvidence:
    offender: str
    digest: str
    reporter: str
    kind: str = "equivocation"

    def __post_init__(self) -> None:
        if self.kind not in ("equivocation", "invalid_qc", "absent_vote"):
            raise ValueError(f"unknown evidence kind {self.kind!r}")


@dataclass
class MisbehaviorLog:
    entries: dict = field(default_factory=dict)  # digest -> (offender, kind)

    def record(self, offender: str, kind: str, digest: str) -> None:
        self.entries.setdefault(digest, (offender, kind))

    def matches(self, ev: PenaltyEvidence) -> bool:
        return self.entries.get(ev.digest) == (ev.offender, ev.kind)


class Economy:
    """Accounts for every token: balances and locks (via the stake ledger), collateral, burn."""

    def __init__(
        self,
        stake: StakeLedger,
        supply: Optional[TokenSupply] = None,
        treasury: str = "treasury",
    ):
        self.stake = stake
        self.supply = supply or TokenSupply()
        self.treasury = treasury
        self.collateral: dict[str, int] = {}
        self.burned = 0
        self.log = MisbehaviorLog()
        self.slashed: set[str] = set()

    def post_collateral(self, account: str, amount: int) -> None:
        self.stake.debit(account, amount)
        self.collateral[account] = self.collateral.get(account, 0) + amount

    def release_collateral(self, account: str, amount: int) -> None:
        held = self.collateral.get(account, 0)
        if amount > held:
            raise ValueError(f"{account} holds only {held} collateral")
        self.collateral[account] = held - amount
        self.stake.credit(account, amount)

    def mint(self) -> int:
        minted = epoch_mint(self.supply)
        self.stake.credit(self.treasury, minted)
        return minted

    def pay_rewards(self, budget: int, participants: Iterable[tuple[str, float]]) -> dict[str, int]:
        budget = min(budget, self.stake.balance(self.treasury))
        payouts = distribute(budget, participants)
        paid = sum(payouts.values())
        self.stake.debit(self.treasury, paid)
        for pid, amount in payouts.items():
            if amount:
                self.stake.credit(pid, amount)
        return payouts

    def slash(self, evidence: PenaltyEvidence, beta: float = 0.5) -> tuple[int, int]:
        """Confiscate the offender's collateral; the reporter gets ``beta`` of it, the rest burns."""
        if not 0 <= beta <= 1:
            raise ValueError("beta must lie in [0, 1]")
        if not self.log.matches(evidence):
            raise InvalidEvidence(f"evidence {evidence.digest[:12]} is not in the misbehavior log")
        held = self.collateral.get(evidence.offender, 0)
        if held <= 0:
            raise NoCollateral(f"{evidence.offender} has no collateral posted")
        reward = math.floor(held * _as_fraction(beta))
        self.collateral[evidence.offender] = 0
        self.stake.credit(evidence.reporter, reward)
        self.burned += held - reward
        self.slashed.add(evidence.offender)
        return -held, reward

    def accounted(self) -> int:
        return self.stake.total() + sum(self.collateral.values()) + self.burned

    def conserved(self) -> bool:
        return self.accounted() == self.supply.genesis + self.supply.minted


def required_stake(reservation_l1: float, rate: float) -> int:
    """Tokens a vDSP must stake to back a reservation of the given L1 size."""
    return math.ceil(reservation_l1 * rate)


def activity_score(history: Sequence[bool], window: int = 10) -> float:
    recent = list(history)[-window:]
    if not recent:
        return 0.0
    return sum(1 for h in recent if h) / len(recent)
