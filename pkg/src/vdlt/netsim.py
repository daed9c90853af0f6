"""Deterministic discrete-event message fabric with latency, loss and fault injection."""

from __future__ import annotations

import hashlib
import heapq
import random
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Iterable, Optional

from .core_types import NodeId


class UnknownNode(KeyError):
    pass


class OverlappingWindows(ValueError):
    pass


def node_stream(seed: int, node: NodeId, salt: str = "") -> random.Random:
    """Random stream for one node, split from the master seed by node id."""
    h = hashlib.sha256(f"{seed}|{salt}|{node}".encode()).digest()
    return random.Random(int.from_bytes(h[:8], "big"))


@dataclass(frozen=True)
class LatencyModel:
    base: int = 1
    jitter: str = "none"  # none | uniform | exponential
    lo: int = 0
    hi: int = 0
    mean: float = 0.0

    def __post_init__(self) -> None:
        if self.base < 1:
            raise ValueError("base latency must be >= 1 tick")
        if self.jitter not in ("none", "uniform", "exponential"):
            raise ValueError(f"unknown jitter kind {self.jitter!r}")
        if self.jitter == "uniform" and not 0 <= self.lo <= self.hi:
            raise ValueError("uniform jitter needs 0 <= lo <= hi")
        if self.jitter == "exponential" and self.mean <= 0:
            raise ValueError("exponential jitter needs a positive mean")

    def sample(self, rng: random.Random) -> int:
        if self.jitter == "none":
            return self.base
        if self.jitter == "uniform":
            return self.base + rng.randint(self.lo, self.hi)
        return self.base + int(rng.expovariate(1.0 / self.mean))


class Behavior(Enum):
    CRASH = "crash"
    SILENCE = "silence"
    EQUIVOCATE = "equivocate"
    CORRUPT_SIG = "corrupt_sig"
    DROP_RATE = "drop_rate"


@dataclass(frozen=True)
class FaultEntry:
    node: NodeId
    t1: int
    t2: int
    behavior: Behavior
    p: float = 1.0

    def __post_init__(self) -> None:
        if self.t1 > self.t2:
            raise ValueError(f"fault window [{self.t1}, {self.t2}] is ill-formed")
        if not 0.0 <= self.p <= 1.0:
            raise ValueError("drop probability must lie in [0, 1]")

    def active(self, t: int) -> bool:
        return self.t1 <= t <= self.t2


@dataclass(frozen=True)
class FaultPlan:
    entries: tuple[FaultEntry, ...] = ()

    def validate(self) -> None:
        by_key: dict[tuple, list[FaultEntry]] = {}
        for e in self.entries:
            by_key.setdefault((e.node, e.behavior), []).append(e)
        for (node, behavior), es in by_key.items():
            es = sorted(es, key=lambda e: (e.t1, e.t2))
            for a, b in zip(es, es[1:]):
                if b.t1 <= a.t2:
                    raise OverlappingWindows(
                        f"{behavior.value} windows overlap on node {node}: "
                        f"[{a.t1},{a.t2}] and [{b.t1},{b.t2}]"
                    )

    def shifted(self, dt: int) -> FaultPlan:
        return FaultPlan(
            tuple(FaultEntry(e.node, e.t1 + dt, e.t2 + dt, e.behavior, e.p) for e in self.entries)
        )


@dataclass(order=True)
class Event:
    deliver_at: int
    seq: int
    src: NodeId = field(compare=False)
    dst: NodeId = field(compare=False)
    payload: Any = field(compare=False)
    sent_at: int = field(compare=False, default=0)


class Fabric:
    """Single logical clock and an event queue totally ordered by (deliver_at, seq)."""

    def __init__(
        self,
        nodes: Iterable[NodeId],
        seed: int = 0,
        latency: Optional[LatencyModel] = None,
        now: int = 0,
        salt: str = "",
    ):
        self.nodes = list(dict.fromkeys(nodes))
        self._node_set = set(self.nodes)
        self.seed = seed
        self.salt = salt
        self.latency = latency or LatencyModel()
        self.now = now
        self._queue: list[Event] = []
        self._seq = 0
        self._rngs = {n: node_stream(seed, n, salt) for n in self.nodes}
        self.plan = FaultPlan()
        self.sent = 0
        self.delivered = 0
        self.dropped = 0
        self.fault_drops: dict[str, int] = {}
        self._trace = hashlib.sha256()

    def add_node(self, node: NodeId) -> None:
        if node not in self._node_set:
            self.nodes.append(node)
            self._node_set.add(node)
            self._rngs[node] = node_stream(self.seed, node, self.salt)

    def inject(self, plan: FaultPlan) -> Fabric:
        plan.validate()
        for e in plan.entries:
            if e.node not in self._node_set:
                raise UnknownNode(e.node)
        combined = FaultPlan(self.plan.entries + plan.entries)
        combined.validate()
        self.plan = combined
        return self

    def behaviors(self, node: NodeId, t: int) -> list[FaultEntry]:
        return [e for e in self.plan.entries if e.node == node and e.active(t)]

    def has_behavior(self, node: NodeId, behavior: Behavior, t: int) -> bool:
        return any(e.behavior is behavior for e in self.behaviors(node, t))

    def is_crashed(self, node: NodeId, t: int) -> bool:
        return self.has_behavior(node, Behavior.CRASH, t)

    def _count_drop(self, kind: str) -> None:
        self.dropped += 1
        self.fault_drops[kind] = self.fault_drops.get(kind, 0) + 1

    def send(self, msg: Any, src: NodeId, dst: NodeId, now: Optional[int] = None) -> Optional[Event]:
        now = self.now if now is None else now
        if src not in self._node_set:
            raise UnknownNode(src)
        if dst not in self._node_set:
            raise UnknownNode(dst)
        if now < self.now:
            raise ValueError(f"cannot send in the past (now={now}, clock={self.now})")
        self.sent += 1
        rng = self._rngs[src]
        for e in self.behaviors(src, now):
            if e.behavior is Behavior.CRASH:
                self._count_drop("crash")
                return None
            if e.behavior is Behavior.SILENCE:
                self._count_drop("silence")
                return None
            if e.behavior is Behavior.DROP_RATE and rng.random() < e.p:
                self._count_drop("drop_rate")
                return None
        ev = Event(now + self.latency.sample(rng), self._seq, src, dst, msg, now)
        self._seq += 1
        heapq.heappush(self._queue, ev)
        return ev

    def next_time(self) -> Optional[int]:
        return self._queue[0].deliver_at if self._queue else None

    def pending(self) -> int:
        return len(self._queue)

    def run_until(self, t: int) -> list[Event]:
        if t < self.now:
            raise ValueError(f"cannot run backwards to {t} from {self.now}")
        out = []
        while self._queue and self._queue[0].deliver_at <= t:
            ev = heapq.heappop(self._queue)
            self.now = ev.deliver_at
            if self.is_crashed(ev.dst, ev.deliver_at):
                self._count_drop("crash")
                continue
            self.delivered += 1
            self._trace.update(
                f"{ev.deliver_at}|{ev.seq}|{ev.src}|{ev.dst}|{ev.payload!r}\n".encode()
            )
            out.append(ev)
        self.now = t
        return out

    def trace_digest(self) -> str:
        return self._trace.hexdigest()
