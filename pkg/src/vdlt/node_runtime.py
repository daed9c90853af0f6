"""Role virtualization, health tracking, the two-layer control hierarchy,
contract execution and virtual-DLT resource reservation."""

from __future__ import annotations

import math
import statistics
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Iterable, Mapping, Optional, Sequence

from .core_types import (
    Block,
    BlockKind,
    NodeId,
    NodeProfile,
    NodeRole,
    ResourceVector,
    Transaction,
)


class UnfitForControl(ValueError):
    pass


class UnknownGroup(KeyError):
    pass


class NoCandidates(ValueError):
    pass


class CommitteeUnhealthy(RuntimeError):
    pass


class OverCapacity(ValueError):
    pass


@dataclass(frozen=True)
class LocalGroup:
    control: tuple[NodeId, ...]
    executors: tuple[NodeId, ...]


@dataclass
class Hierarchy:
    top: tuple[NodeId, ...]
    groups: dict[int, LocalGroup] = field(default_factory=dict)

    def validate(self) -> None:
        if not self.top:
            raise ValueError("top control committee is empty")
        seen: dict[NodeId, int] = {}
        for gid, g in self.groups.items():
            if not g.control:
                raise ValueError(f"group {gid} has an empty control committee")
            for e in g.executors:
                if e in seen:
                    raise ValueError(f"executor {e} belongs to groups {seen[e]} and {gid}")
                seen[e] = gid
        control = set(self.top)
        for g in self.groups.values():
            control |= set(g.control)
        clash = control & set(seen)
        if clash:
            raise ValueError(f"nodes {sorted(clash)} hold both control and execution roles")

    def group_of(self, executor: NodeId) -> Optional[int]:
        for gid, g in self.groups.items():
            if executor in g.executors:
                return gid
        return None

    def all_executors(self) -> list[NodeId]:
        return [e for gid in sorted(self.groups) for e in self.groups[gid].executors]

    def control_nodes(self) -> list[NodeId]:
        out = list(self.top)
        for gid in sorted(self.groups):
            out.extend(n for n in self.groups[gid].control if n not in out)
        return out


@dataclass(frozen=True)
class StabilityFloor:
    min_speed: float
    min_trust: float = 0.5

    @classmethod
    def from_executors(cls, executors: Iterable[NodeProfile], min_trust: float = 0.5) -> StabilityFloor:
        speeds = [e.speed for e in executors]
        return cls(statistics.median(speeds) if speeds else 0.0, min_trust)


def virtualize(
    node: NodeProfile,
    role: NodeRole,
    hierarchy: Optional[Hierarchy] = None,
    floor: Optional[StabilityFloor] = None,
) -> NodeProfile:
    """Give ``node`` a new role. Control roles require the stability floor."""
    if hierarchy is not None and role.group is not None and role.group not in hierarchy.groups:
        raise UnknownGroup(role.group)
    if role.is_control and floor is not None:
        if node.speed < floor.min_speed or node.trust < floor.min_trust:
            raise UnfitForControl(
                f"{node.id}: speed {node.speed} / trust {node.trust} below floor "
                f"{floor.min_speed} / {floor.min_trust}"
            )
    return replace(node, role=role)


class HealthStatus(Enum):
    HEALTHY = "healthy"
    SUSPECT = "suspect"
    DOWN = "down"


@dataclass(frozen=True)
class HealthRecord:
    node: NodeId
    last_heartbeat: int = 0
    status: HealthStatus = HealthStatus.HEALTHY
    missed: int = 0


def update_health(rec: HealthRecord, heartbeat_received: bool, now: int, h: int = 3) -> HealthRecord:
    if heartbeat_received:
        return HealthRecord(rec.node, now, HealthStatus.HEALTHY, 0)
    missed = rec.missed + 1
    status = HealthStatus.DOWN if missed >= h else HealthStatus.SUSPECT
    return HealthRecord(rec.node, rec.last_heartbeat, status, missed)


class HealthTable:
    def __init__(self, nodes: Iterable[NodeId], threshold: int = 3):
        self.threshold = threshold
        self.records = {n: HealthRecord(n) for n in nodes}

    def beat(self, node: NodeId, received: bool, now: int) -> HealthRecord:
        rec = update_health(self.records[node], received, now, self.threshold)
        self.records[node] = rec
        return rec

    def is_down(self, node: NodeId) -> bool:
        return self.records[node].status is HealthStatus.DOWN

    def usable(self, nodes: Iterable[NodeId]) -> list[NodeId]:
        return [n for n in nodes if not self.is_down(n)]


@dataclass(frozen=True)
class Local:
    group: int


@dataclass(frozen=True)
class Top:
    pass


TOP = Top()


def route(tx: Transaction, hier: Hierarchy, candidates: Iterable[NodeId]):
    """Local(g) when every candidate executor lies in group g, else Top."""
    candidates = list(candidates)
    if not candidates:
        raise NoCandidates(f"tx {tx.id} has no candidate executors")
    groups = {hier.group_of(c) for c in candidates}
    if len(groups) == 1 and None not in groups:
        return Local(groups.pop())
    return TOP


def joint_committee(
    tx: Transaction, executors: Sequence[NodeId], control: Sequence[NodeId]
) -> tuple[NodeId, ...]:
    """High-security transactions are validated by control and execution nodes together.

    Execution nodes come first so the view-0 leader, and thus the block
    producer, is an execution node.
    """
    if not tx.high_security:
        return tuple(executors)
    return tuple(executors) + tuple(c for c in control if c not in executors)


def execution_ticks(tx: Transaction, speeds: Iterable[float]) -> int:
    slowest = min(speeds)
    return math.ceil(tx.demand.compute / slowest) if tx.demand.compute > 0 else 0


@dataclass(frozen=True)
class Receipt:
    tx_id: int
    committee: tuple[NodeId, ...]
    start: int
    finish: int

    @property
    def ticks(self) -> int:
        return self.finish - self.start


def execute(
    tx: Transaction,
    committee: Sequence[NodeId],
    profiles: Mapping[NodeId, NodeProfile],
    now: int,
    health: Optional[HealthTable] = None,
    height: int = 0,
) -> tuple[Receipt, Block]:
    """Run ``tx`` on ``committee`` and propose the user block that records it.

    Execution time is set by the slowest executing member. The proposal's
    producer is the first execution node in committee order.
    """
    if not committee:
        raise NoCandidates(f"tx {tx.id}: empty committee")
    if health is not None:
        down = [n for n in committee if health.is_down(n)]
        if down:
            raise CommitteeUnhealthy(f"tx {tx.id}: committee members down: {down}")
    executors = [n for n in committee if profiles[n].role.is_execution]
    if not executors:
        raise CommitteeUnhealthy(f"tx {tx.id}: committee has no execution node")
    ticks = execution_ticks(tx, (profiles[n].speed for n in executors))
    receipt = Receipt(tx.id, tuple(committee), now, now + ticks)
    block = Block(BlockKind.USER, height, executors[0], (tx.id,))
    return receipt, block


def block_producer(committee: Sequence[NodeId], leader: NodeId, profiles: Mapping[NodeId, NodeProfile]) -> NodeId:
    """The consensus leader if it is an execution node, else the next execution node after it."""
    committee = list(committee)
    i = committee.index(leader)
    for k in range(len(committee)):
        cand = committee[(i + k) % len(committee)]
        if profiles[cand].role.is_execution:
            return cand
    raise CommitteeUnhealthy("committee has no execution node")


@dataclass(frozen=True)
class VirtualInstance:
    id: str
    reservation: ResourceVector
    owner: str
    class_overrides: tuple = ()


def instantiate_virtual_dlt(
    capacity: ResourceVector,
    existing: Iterable[VirtualInstance],
    req: ResourceVector,
    owner: str = "",
    instance_id: str = "",
    class_overrides: tuple = (),
) -> VirtualInstance:
    if not req.is_nonnegative():
        raise ValueError("reservation components must be non-negative")
    used = ResourceVector()
    for inst in existing:
        used = used + inst.reservation
    if not (used + req).fits_within(capacity, eps=0.0):
        raise OverCapacity(f"reservation {req.as_tuple()} exceeds remaining {(capacity - used).as_tuple()}")
    return VirtualInstance(instance_id, req, owner, class_overrides)


class Substrate:
    """Substrate resources shared by co-hosted virtual DLT instances."""

    def __init__(self, capacity: ResourceVector):
        self.capacity = capacity
        self.instances: dict[str, VirtualInstance] = {}

    def reserved(self) -> ResourceVector:
        total = ResourceVector()
        for inst in self.instances.values():
            total = total + inst.reservation
        return total

    def admit(self, instance_id: str, req: ResourceVector, owner: str = "", class_overrides: tuple = ()) -> VirtualInstance:
        if instance_id in self.instances:
            raise ValueError(f"instance {instance_id} already exists")
        inst = instantiate_virtual_dlt(
            self.capacity, self.instances.values(), req, owner, instance_id, class_overrides
        )
        self.instances[instance_id] = inst
        return inst

    def release(self, instance_id: str) -> VirtualInstance:
        return self.instances.pop(instance_id)
