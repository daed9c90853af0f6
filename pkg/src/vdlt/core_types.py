"""Shared vocabulary: CoS classes, transactions, node profiles, blocks and resource vectors."""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum, IntEnum
from typing import TYPE_CHECKING, Optional

if TYPE_CHECKING:
    from .consensus import QuorumCert

NodeId = str

COS_CLASS_SHIFT = 5
COS_RESERVED_MASK = 0b0001_1111


class CosClass(IntEnum):
    """Class of service, valued by its 3-bit code."""

    SCAVENGER = 0b000
    BEST_EFFORT = 0b001
    PRIVATE = 0b010
    MANAGEMENT_CONTROL = 0b011
    LOW_COST = 0b100
    STORAGE_INTENSIVE = 0b101
    COMPUTATION_INTENSIVE = 0b110
    FAST_CONFIRMATION = 0b111

    @property
    def label(self) -> str:
        return self.name.lower()

    @classmethod
    def from_label(cls, label: str) -> "CosClass":
        try:
            return cls[label.upper()]
        except KeyError:
            raise ValueError(f"unknown CoS class {label!r}") from None


@dataclass(frozen=True)
class CosByte:
    """One-octet CoS tag. Only bits 7..5 select the class; bits 4..0 ride along untouched."""

    raw: int

    def __post_init__(self) -> None:
        if not isinstance(self.raw, int) or not 0 <= self.raw <= 0xFF:
            raise ValueError(f"CoS byte must be an integer in [0, 255], got {self.raw!r}")

    @property
    def cos_class(self) -> CosClass:
        return parse_cos(self)

    @property
    def reserved(self) -> int:
        return self.raw & COS_RESERVED_MASK


def parse_cos(b: CosByte | int) -> CosClass:
    raw = b.raw if isinstance(b, CosByte) else CosByte(b).raw
    return CosClass(raw >> COS_CLASS_SHIFT)


def encode_cos(c: CosClass, reserved: int = 0) -> CosByte:
    if not 0 <= reserved <= COS_RESERVED_MASK:
        raise ValueError("reserved bits must fit in 5 bits")
    return CosByte((int(c) << COS_CLASS_SHIFT) | reserved)


@dataclass(frozen=True)
class ResourceVector:
    compute: float = 0.0
    storage: float = 0.0
    bandwidth: float = 0.0

    def __add__(self, other: ResourceVector) -> ResourceVector:
        return ResourceVector(
            self.compute + other.compute,
            self.storage + other.storage,
            self.bandwidth + other.bandwidth,
        )

    def __sub__(self, other: ResourceVector) -> ResourceVector:
        return ResourceVector(
            self.compute - other.compute,
            self.storage - other.storage,
            self.bandwidth - other.bandwidth,
        )

    def scale(self, k: float) -> ResourceVector:
        return ResourceVector(self.compute * k, self.storage * k, self.bandwidth * k)

    def fits_within(self, other: ResourceVector, eps: float = 1e-9) -> bool:
        """Component-wise ``self <= other``."""
        return (
            self.compute <= other.compute + eps
            and self.storage <= other.storage + eps
            and self.bandwidth <= other.bandwidth + eps
        )

    def is_nonnegative(self) -> bool:
        return self.compute >= 0 and self.storage >= 0 and self.bandwidth >= 0

    def l1(self) -> float:
        return abs(self.compute) + abs(self.storage) + abs(self.bandwidth)

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.compute, self.storage, self.bandwidth)

    @classmethod
    def from_obj(cls, obj) -> ResourceVector:
        if isinstance(obj, ResourceVector):
            return obj
        if isinstance(obj, dict):
            return cls(
                float(obj.get("compute", 0.0)),
                float(obj.get("storage", 0.0)),
                float(obj.get("bandwidth", 0.0)),
            )
        c, s, b = obj
        return cls(float(c), float(s), float(b))


ZERO_RESOURCES = ResourceVector()


@dataclass(frozen=True)
class QoSTargets:
    max_latency: float
    min_throughput: float = 0.0
    max_cost: float = float("inf")
    privacy: int = 0


class RoleKind(Enum):
    MANAGEMENT_CONTROL = "management_control"
    EXECUTION = "execution"


@dataclass(frozen=True)
class NodeRole:
    """A control role with ``group=None`` sits in the top layer; otherwise in local group ``group``."""

    kind: RoleKind
    group: Optional[int] = None

    @classmethod
    def top_control(cls) -> NodeRole:
        return cls(RoleKind.MANAGEMENT_CONTROL, None)

    @classmethod
    def local_control(cls, group: int) -> NodeRole:
        return cls(RoleKind.MANAGEMENT_CONTROL, group)

    @classmethod
    def execution(cls, group: int) -> NodeRole:
        return cls(RoleKind.EXECUTION, group)

    @property
    def is_control(self) -> bool:
        return self.kind is RoleKind.MANAGEMENT_CONTROL

    @property
    def is_execution(self) -> bool:
        return self.kind is RoleKind.EXECUTION

    @property
    def is_top(self) -> bool:
        return self.is_control and self.group is None


@dataclass(frozen=True)
class NodeProfile:
    id: NodeId
    speed: float
    capacity: ResourceVector
    cost_rate: float
    trust: float
    privacy_capable: bool
    role: NodeRole

    def __post_init__(self) -> None:
        if self.speed <= 0:
            raise ValueError(f"node {self.id}: speed must be positive")
        if not 0.0 <= self.trust <= 1.0:
            raise ValueError(f"node {self.id}: trust must lie in [0, 1]")


@dataclass(frozen=True)
class Transaction:
    id: int
    submitter: NodeId
    cos: CosByte
    demand: ResourceVector
    qos: QoSTargets
    submit_time: int
    payload_size: int = 1
    high_security: bool = False
    scope: str = "local"

    @property
    def requested_class(self) -> CosClass:
        return parse_cos(self.cos)


def validate_transaction(tx: Transaction, known_nodes=None) -> list[str]:
    """Return the list of violations; an empty list means the transaction is well formed."""
    violations = []
    if not tx.demand.is_nonnegative():
        violations.append("negative demand")
    if tx.qos.max_latency <= 0:
        violations.append("non-positive latency target")
    if tx.qos.max_cost < 0:
        violations.append("negative cost target")
    if tx.qos.min_throughput < 0:
        violations.append("negative throughput target")
    if tx.qos.privacy not in (0, 1):
        violations.append("privacy flag not in {0,1}")
    if tx.submit_time < 0:
        violations.append("negative submit time")
    if tx.payload_size < 0:
        violations.append("negative payload size")
    if known_nodes is not None and tx.submitter not in known_nodes:
        violations.append("unknown submitter")
    return violations


class BlockKind(Enum):
    CONTROL = "control"
    USER = "user"


class ProducerRoleError(ValueError):
    pass


@dataclass(frozen=True)
class Block:
    kind: BlockKind
    height: int
    producer: NodeId
    payload: tuple = ()
    qc: Optional["QuorumCert"] = field(default=None, compare=False)


def check_block_producer(block: Block, producer_role: NodeRole) -> None:
    """User blocks come from execution nodes only."""
    if block.kind is BlockKind.USER and not producer_role.is_execution:
        raise ProducerRoleError(
            f"user block {block.height} produced by non-execution node {block.producer}"
        )
