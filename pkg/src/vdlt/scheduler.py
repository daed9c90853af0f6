"""Transaction classification and class-based weighted fair queuing.

ManagementControl is served with strict priority, Scavenger only when every
other queue is empty, and the remaining classes share the service budget by
self-clocked virtual finish times.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field

from .core_types import CosClass, Transaction

DEFAULT_WEIGHTS = {
    CosClass.FAST_CONFIRMATION: 8,
    CosClass.COMPUTATION_INTENSIVE: 4,
    CosClass.STORAGE_INTENSIVE: 4,
    CosClass.LOW_COST: 2,
    CosClass.PRIVATE: 4,
    CosClass.BEST_EFFORT: 1,
    CosClass.SCAVENGER: 1,
    # never consulted: control traffic bypasses WFQ
    CosClass.MANAGEMENT_CONTROL: 1,
}

WFQ_CLASSES = tuple(
    c for c in CosClass if c not in (CosClass.MANAGEMENT_CONTROL, CosClass.SCAVENGER)
)


@dataclass
class SchedulerConfig:
    weights: dict = field(default_factory=lambda: dict(DEFAULT_WEIGHTS))
    capacities: dict = field(default_factory=lambda: {c: 64 for c in CosClass})
    trust_threshold: float = 0.5
    service_rate: float = 1.0
    unit_bytes: int = 1

    def __post_init__(self) -> None:
        full = dict(DEFAULT_WEIGHTS)
        full.update(self.weights)
        self.weights = full
        caps = {c: 64 for c in CosClass}
        caps.update(self.capacities)
        self.capacities = caps
        for c, w in self.weights.items():
            if int(w) != w or w < 1:
                raise ValueError(f"weight for {c.name} must be a positive integer")
        for c, cap in self.capacities.items():
            if int(cap) != cap or cap < 1:
                raise ValueError(f"capacity for {c.name} must be >= 1")
        if not 0.0 <= self.trust_threshold <= 1.0:
            raise ValueError("trust_threshold must lie in [0, 1]")
        if self.service_rate <= 0:
            raise ValueError("service_rate must be positive")


class Dropped(Exception):
    """Tail drop: the class queue is at capacity."""

    def __init__(self, tx: Transaction, cos_class: CosClass, reason: str = "full"):
        super().__init__(f"tx {tx.id} dropped from {cos_class.name}: {reason}")
        self.tx = tx
        self.cos_class = cos_class
        self.reason = reason


def classify(
    tx: Transaction,
    submitter_trust: float,
    cfg: SchedulerConfig,
    submitter_is_control: bool = False,
) -> CosClass:
    """Assigned class for ``tx``, applying the override rules to the requested class.

    Spoofed control traffic is pushed to Scavenger; otherwise a submitter below
    the trust threshold is demoted to BestEffort (never promoted out of Scavenger).
    """
    if not 0.0 <= submitter_trust <= 1.0:
        raise ValueError("submitter_trust must lie in [0, 1]")
    requested = tx.requested_class
    if requested is CosClass.MANAGEMENT_CONTROL and not submitter_is_control:
        return CosClass.SCAVENGER
    if submitter_trust < cfg.trust_threshold and requested is not CosClass.SCAVENGER:
        return CosClass.BEST_EFFORT
    return requested


class ClassQueues:
    """One FIFO per class plus the per-class virtual finish times."""

    def __init__(self, cfg: SchedulerConfig):
        self.cfg = cfg
        self.queues: dict[CosClass, deque] = {c: deque() for c in CosClass}
        self.finish: dict[CosClass, float] = {c: 0.0 for c in CosClass}
        self.virtual_time = 0.0
        self.drops: dict[CosClass, int] = {c: 0 for c in CosClass}
        self.served: dict[CosClass, int] = {c: 0 for c in CosClass}

    def __len__(self) -> int:
        return sum(len(q) for q in self.queues.values())

    def occupancy(self, c: CosClass) -> int:
        return len(self.queues[c])

    def is_empty(self) -> bool:
        return len(self) == 0

    def _weight(self, c: CosClass) -> float:
        return self.cfg.weights[c]

    def size_of(self, tx: Transaction) -> int:
        return max(1, math.ceil(tx.payload_size / self.cfg.unit_bytes))

    def enqueue(self, tx: Transaction, c: CosClass) -> None:
        q = self.queues[c]
        if len(q) >= self.cfg.capacities[c]:
            self.drops[c] += 1
            raise Dropped(tx, c)
        if not q:
            # a class rejoining the backlog starts from the current virtual clock
            self.finish[c] = max(self.finish[c], self.virtual_time)
        q.append(tx)

    def others_backlogged(self) -> bool:
        return any(self.queues[c] for c in CosClass if c is not CosClass.SCAVENGER)

    def _head_tag(self, c: CosClass) -> float:
        return self.finish[c] + self.size_of(self.queues[c][0]) / self._weight(c)

    def _pop(self, c: CosClass) -> Transaction:
        tx = self.queues[c].popleft()
        self.served[c] += 1
        return tx

    def next_batch(self, budget: float) -> list[Transaction]:
        """Serve up to ``budget`` service units.

        A head that does not fit in the remaining budget is skipped for this
        batch (control heads included), so the batch is non-empty whenever
        some eligible head fits.
        """
        if budget <= 0:
            raise ValueError("budget must be positive")
        out: list[Transaction] = []
        remaining = budget

        control = self.queues[CosClass.MANAGEMENT_CONTROL]
        while control and self.size_of(control[0]) <= remaining:
            remaining -= self.size_of(control[0])
            out.append(self._pop(CosClass.MANAGEMENT_CONTROL))

        blocked: set[CosClass] = set()
        while True:
            ready = [c for c in WFQ_CLASSES if self.queues[c] and c not in blocked]
            if not ready:
                break
            c = min(ready, key=lambda k: (self._head_tag(k), int(k), self.queues[k][0].id))
            size = self.size_of(self.queues[c][0])
            if size > remaining:
                blocked.add(c)
                continue
            tag = self._head_tag(c)
            self.finish[c] = tag
            self.virtual_time = tag
            remaining -= size
            out.append(self._pop(c))

        if self.others_backlogged():
            return out
        scav = self.queues[CosClass.SCAVENGER]
        while scav and self.size_of(scav[0]) <= remaining:
            remaining -= self.size_of(scav[0])
            out.append(self._pop(CosClass.SCAVENGER))
        return out


def fluid_shares(weights: dict, budget: float) -> dict:
    """Service each saturated class receives under the ideal fluid model."""
    total = sum(weights.values())
    return {c: budget * w / total for c, w in weights.items()}
