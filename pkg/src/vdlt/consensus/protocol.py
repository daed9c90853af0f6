"""Leader-based PBFT replica state machine.

Two modes share one state machine:

* ``CLASSICAL``: every replica broadcasts Prepare and Commit votes (all-to-all).
* ``MULTISIG``: votes are signature shares sent to the leader, which
  aggregates a quorum into a :class:`QuorumCert` carrying a signer bitmap
  and broadcasts it. The PrePrepare doubles as the request for prepare
  shares and the prepare certificate doubles as the request for commit shares.

:func:`step` is pure: it never mutates its input state.
"""

from __future__ import annotations

import copy
import hashlib
from dataclasses import dataclass, field
from enum import Enum, IntEnum
from typing import Optional, Sequence, Union

from ..core_types import NodeId
from .signatures import SignatureScheme


class Mode(Enum):
    CLASSICAL = "classical"
    MULTISIG = "multisig"


class Phase(IntEnum):
    IDLE = 0
    PRE_PREPARED = 1
    PREPARED = 2
    COMMITTED = 3


class InsufficientShares(ValueError):
    pass


class MismatchedDigest(ValueError):
    pass


class InvalidShare(ValueError):
    pass


def quorum_size(n: int) -> int:
    """Smallest integer strictly greater than 2n/3."""
    if n < 1:
        raise ValueError("committee size must be >= 1")
    return (2 * n) // 3 + 1


def max_faults(n: int) -> int:
    return (n - 1) // 3


def has_quorum(count: int, n: int) -> bool:
    return count >= quorum_size(n)


@dataclass(frozen=True)
class ConsensusConfig:
    committee: tuple[NodeId, ...]
    mode: Mode = Mode.MULTISIG
    view_timeout: int = 50

    def __post_init__(self) -> None:
        object.__setattr__(self, "committee", tuple(self.committee))
        if len(self.committee) < 1:
            raise ValueError("committee must not be empty")
        if len(set(self.committee)) != len(self.committee):
            raise ValueError("committee ids must be distinct")
        if self.view_timeout < 1:
            raise ValueError("view_timeout must be >= 1")

    @property
    def n(self) -> int:
        return len(self.committee)

    @property
    def f(self) -> int:
        return max_faults(self.n)

    def index(self, node: NodeId) -> int:
        return self.committee.index(node)


def leader_for(view: int, cfg: ConsensusConfig) -> NodeId:
    if view < 0:
        raise ValueError("view must be >= 0")
    return cfg.committee[view % cfg.n]


def vote_message(phase: str, view: int, height: int, digest: bytes) -> bytes:
    return b"%s|%d|%d|" % (phase.encode(), view, height) + digest


def block_digest(*parts) -> bytes:
    h = hashlib.sha256()
    for p in parts:
        h.update(p if isinstance(p, bytes) else repr(p).encode())
        h.update(b"\x00")
    return h.digest()


def alternate_digest(digest: bytes) -> bytes:
    """The conflicting value colluding equivocators agree on."""
    return hashlib.sha256(b"equivocate|" + digest).digest()


@dataclass(frozen=True)
class QuorumCert:
    phase: str
    view: int
    height: int
    digest: bytes
    bitmap: tuple[bool, ...]
    agg_sig: bytes

    @property
    def popcount(self) -> int:
        return sum(self.bitmap)

    @property
    def bitmap_str(self) -> str:
        return "".join("1" if b else "0" for b in self.bitmap)

    def signers(self, cfg: ConsensusConfig) -> list[NodeId]:
        return [node for node, bit in zip(cfg.committee, self.bitmap) if bit]


@dataclass(frozen=True)
class Share:
    signer: NodeId
    digest: bytes
    signature: bytes


def aggregate(
    shares: Sequence[Share],
    digest: bytes,
    cfg: ConsensusConfig,
    scheme: SignatureScheme,
    phase: str = "commit",
    view: int = 0,
    height: int = 1,
    verify_shares: bool = True,
) -> QuorumCert:
    by_node: dict[NodeId, Share] = {}
    for s in shares:
        if s.digest != digest:
            raise MismatchedDigest(f"share from {s.signer} is over a different digest")
        if s.signer not in cfg.committee:
            raise InvalidShare(f"{s.signer} is not a committee member")
        by_node[s.signer] = s
    if verify_shares:
        msg = vote_message(phase, view, height, digest)
        for s in by_node.values():
            if not scheme.verify(s.signer, msg, s.signature):
                raise InvalidShare(f"bad signature share from {s.signer}")
    if not has_quorum(len(by_node), cfg.n):
        raise InsufficientShares(
            f"{len(by_node)} shares, need {quorum_size(cfg.n)} of {cfg.n}"
        )
    bitmap = tuple(node in by_node for node in cfg.committee)
    sigs = [by_node[node].signature for node in cfg.committee if node in by_node]
    return QuorumCert(phase, view, height, digest, bitmap, scheme.aggregate(sigs))


def verify_qc(qc: QuorumCert, scheme: SignatureScheme, cfg: ConsensusConfig) -> bool:
    if not isinstance(qc, QuorumCert) or len(qc.bitmap) != cfg.n:
        return False
    if not has_quorum(qc.popcount, cfg.n):
        return False
    msg = vote_message(qc.phase, qc.view, qc.height, qc.digest)
    return scheme.verify_aggregate(qc.signers(cfg), msg, qc.agg_sig)


# -- messages -----------------------------------------------------------------


@dataclass(frozen=True)
class Request:
    height: int
    digest: bytes


@dataclass(frozen=True)
class Timeout:
    pass


@dataclass(frozen=True)
class PrePrepare:
    sender: NodeId
    view: int
    height: int
    digest: bytes
    sig: bytes

    def signed_bytes(self) -> bytes:
        return vote_message("preprepare", self.view, self.height, self.digest)


@dataclass(frozen=True)
class Prepare:
    sender: NodeId
    view: int
    height: int
    digest: bytes
    sig: bytes
    pp_sig: bytes = b""

    def signed_bytes(self) -> bytes:
        return vote_message("prepare", self.view, self.height, self.digest)


@dataclass(frozen=True)
class Commit:
    sender: NodeId
    view: int
    height: int
    digest: bytes
    sig: bytes

    def signed_bytes(self) -> bytes:
        return vote_message("commit", self.view, self.height, self.digest)


@dataclass(frozen=True)
class CertMsg:
    sender: NodeId
    qc: QuorumCert
    sig: bytes

    def signed_bytes(self) -> bytes:
        q = self.qc
        return vote_message("cert-" + q.phase, q.view, q.height, q.digest) + q.agg_sig


@dataclass(frozen=True)
class ViewChange:
    sender: NodeId
    new_view: int
    height: int
    prepared: Optional[QuorumCert]
    sig: bytes

    def signed_bytes(self) -> bytes:
        p = self.prepared
        tail = b"none" if p is None else b"%d|" % p.view + p.digest + p.agg_sig
        return b"viewchange|%d|%d|" % (self.new_view, self.height) + tail


@dataclass(frozen=True)
class NewView:
    sender: NodeId
    view: int
    height: int
    digest: bytes
    proofs: tuple[ViewChange, ...]
    sig: bytes

    def signed_bytes(self) -> bytes:
        return vote_message("newview", self.view, self.height, self.digest)


@dataclass(frozen=True)
class Decided:
    sender: NodeId
    height: int
    qc: QuorumCert


ConsensusMessage = Union[
    Request, Timeout, PrePrepare, Prepare, Commit, CertMsg, ViewChange, NewView, Decided
]
SIGNED_TYPES = (PrePrepare, Prepare, Commit, CertMsg, ViewChange, NewView)


@dataclass(frozen=True)
class Evidence:
    """Two conflicting statements signed by the same node."""

    offender: NodeId
    kind: str
    view: int
    height: int
    digest: str


def evidence_digest(offender: NodeId, first: bytes, second: bytes) -> str:
    a, b = sorted([first, second])
    return hashlib.sha256(offender.encode() + b"|" + a + b"|" + b).hexdigest()


# -- replica state ------------------------------------------------------------


@dataclass
class ReplicaState:
    node: NodeId
    secret: bytes
    view: int = 0
    height: int = 1
    phase: Phase = Phase.IDLE
    in_view_change: bool = False
    pending: Optional[bytes] = None
    deadline: Optional[int] = None
    accepted: dict = field(default_factory=dict)  # (view, height) -> digest
    leader_stmt: dict = field(default_factory=dict)  # (view, height) -> signed bytes
    prepare_votes: dict = field(default_factory=dict)  # (view, height) -> {digest: {node: sig}}
    commit_votes: dict = field(default_factory=dict)
    prepared_qc: Optional[QuorumCert] = None
    certs_sent: frozenset = frozenset()
    vc_votes: dict = field(default_factory=dict)  # view -> {node: ViewChange}
    committed: dict = field(default_factory=dict)  # height -> digest
    commit_qcs: dict = field(default_factory=dict)  # height -> QuorumCert
    invalid: int = 0
    evidence: tuple = ()

    def clone(self) -> ReplicaState:
        new = copy.copy(self)
        for name in ("accepted", "leader_stmt", "prepare_votes", "commit_votes",
                     "vc_votes", "committed", "commit_qcs"):
            setattr(new, name, dict(getattr(self, name)))
        return new


def new_replica(node: NodeId, scheme: SignatureScheme, height: int = 1, view: int = 0) -> ReplicaState:
    return ReplicaState(node=node, secret=scheme.keygen(node), height=height, view=view)


Outbound = list[tuple[NodeId, ConsensusMessage]]


class _Step:
    """Mutable working copy for one transition."""

    def __init__(self, state: ReplicaState, now: int, cfg: ConsensusConfig, scheme: SignatureScheme):
        self.s = state.clone()
        self.now = now
        self.cfg = cfg
        self.scheme = scheme
        self.out: Outbound = []

    # helpers
    def sign(self, message: bytes) -> bytes:
        return self.scheme.sign(self.s.secret, message)

    def others(self) -> list[NodeId]:
        return [m for m in self.cfg.committee if m != self.s.node]

    def broadcast(self, msg) -> None:
        for m in self.others():
            self.out.append((m, msg))

    def send(self, to: NodeId, msg) -> None:
        if to == self.s.node:
            return
        self.out.append((to, msg))

    def leader(self, view: Optional[int] = None) -> NodeId:
        return leader_for(self.s.view if view is None else view, self.cfg)

    def is_leader(self) -> bool:
        return self.leader() == self.s.node

    def add_vote(self, table: str, key, digest: bytes, node: NodeId, sig: bytes) -> int:
        votes = getattr(self.s, table)
        per_digest = dict(votes.get(key, {}))
        for other, who in per_digest.items():
            if other != digest and node in who:
                self.record_evidence(node, "equivocation", key[0], key[1],
                                     who[node] + other, sig + digest)
        signers = dict(per_digest.get(digest, {}))
        signers[node] = sig
        per_digest[digest] = signers
        votes[key] = per_digest
        return len(signers)

    def record_evidence(self, offender: NodeId, kind: str, view: int, height: int,
                        first: bytes, second: bytes) -> None:
        ev = Evidence(offender, kind, view, height, evidence_digest(offender, first, second))
        if ev not in self.s.evidence:
            self.s.evidence = self.s.evidence + (ev,)

    def reset_timer(self) -> None:
        self.s.deadline = self.now + self.cfg.view_timeout

    # proposal / voting
    def accept(self, view: int, height: int, digest: bytes, stmt: bytes) -> None:
        s = self.s
        s.accepted[(view, height)] = digest
        s.leader_stmt[(view, height)] = stmt
        s.phase = Phase.PRE_PREPARED
        sig = self.sign(vote_message("prepare", view, height, digest))
        if self.cfg.mode is Mode.CLASSICAL:
            self.broadcast(Prepare(s.node, view, height, digest, sig, stmt))
        else:
            self.send(self.leader(view), Prepare(s.node, view, height, digest, sig))
        self.add_vote("prepare_votes", (view, height), digest, s.node, sig)
        self.check_prepared()

    def propose(self, digest: bytes) -> None:
        s = self.s
        sig = self.sign(vote_message("preprepare", s.view, s.height, digest))
        self.broadcast(PrePrepare(s.node, s.view, s.height, digest, sig))
        self.accept(s.view, s.height, digest, sig)

    def quorum_digest(self, table: str, key) -> Optional[tuple[bytes, dict]]:
        digest = self.s.accepted.get(key)
        if digest is None:
            return None
        signers = getattr(self.s, table).get(key, {}).get(digest, {})
        if has_quorum(len(signers), self.cfg.n):
            return digest, signers
        return None

    def make_qc(self, phase: str, key, digest: bytes, signers: dict) -> QuorumCert:
        view, height = key
        shares = [Share(node, digest, sig) for node, sig in signers.items()]
        return aggregate(shares, digest, self.cfg, self.scheme, phase, view, height,
                         verify_shares=False)

    def check_prepared(self) -> None:
        s = self.s
        key = (s.view, s.height)
        if s.phase is not Phase.PRE_PREPARED or s.in_view_change:
            return
        if self.cfg.mode is Mode.MULTISIG and not self.is_leader():
            return
        found = self.quorum_digest("prepare_votes", key)
        if found is None:
            return
        digest, signers = found
        qc = self.make_qc("prepare", key, digest, signers)
        self.become_prepared(qc)
        if self.cfg.mode is Mode.MULTISIG:
            self.send_cert(qc)

    def become_prepared(self, qc: QuorumCert) -> None:
        s = self.s
        s.prepared_qc = qc
        s.phase = Phase.PREPARED
        sig = self.sign(vote_message("commit", qc.view, qc.height, qc.digest))
        if self.cfg.mode is Mode.CLASSICAL:
            self.broadcast(Commit(s.node, qc.view, qc.height, qc.digest, sig))
        else:
            self.send(self.leader(qc.view), Commit(s.node, qc.view, qc.height, qc.digest, sig))
        self.add_vote("commit_votes", (qc.view, qc.height), qc.digest, s.node, sig)
        self.check_committed()

    def send_cert(self, qc: QuorumCert) -> None:
        tag = (qc.phase, qc.view, qc.height)
        if tag in self.s.certs_sent:
            return
        self.s.certs_sent = self.s.certs_sent | {tag}
        msg = CertMsg(self.s.node, qc, b"")
        msg = CertMsg(self.s.node, qc, self.sign(msg.signed_bytes()))
        self.broadcast(msg)

    def check_committed(self) -> None:
        s = self.s
        key = (s.view, s.height)
        if s.height in s.committed:
            return
        if self.cfg.mode is Mode.MULTISIG and not self.is_leader():
            return
        digest = s.accepted.get(key)
        if digest is None:
            return
        signers = s.commit_votes.get(key, {}).get(digest, {})
        if not has_quorum(len(signers), self.cfg.n):
            return
        if self.cfg.mode is Mode.MULTISIG and s.phase is not Phase.PREPARED:
            return
        qc = self.make_qc("commit", key, digest, signers)
        self.commit(qc)
        if self.cfg.mode is Mode.MULTISIG:
            self.send_cert(qc)

    def commit(self, qc: QuorumCert) -> None:
        s = self.s
        if qc.height in s.committed:
            return
        s.committed[qc.height] = qc.digest
        s.commit_qcs[qc.height] = qc
        if qc.height != s.height:
            return
        s.phase = Phase.COMMITTED
        # next instance starts in the view that decided this one
        s.height += 1
        s.view = qc.view
        s.phase = Phase.IDLE
        s.in_view_change = False
        s.pending = None
        s.deadline = None
        s.prepared_qc = None
        s.vc_votes = {v: vs for v, vs in s.vc_votes.items() if v > s.view}

    # view change
    def start_view_change(self, new_view: int) -> None:
        s = self.s
        if new_view <= s.view and s.in_view_change:
            return
        s.view = new_view
        s.in_view_change = True
        s.phase = Phase.IDLE
        vc = ViewChange(s.node, new_view, s.height, s.prepared_qc, b"")
        vc = ViewChange(s.node, new_view, s.height, s.prepared_qc, self.sign(vc.signed_bytes()))
        self.broadcast(vc)
        self.reset_timer()
        self.record_vc(vc)

    def valid_vc(self, vc: ViewChange) -> bool:
        if vc.sender not in self.cfg.committee:
            return False
        if not self.scheme.verify(vc.sender, vc.signed_bytes(), vc.sig):
            return False
        p = vc.prepared
        if p is not None:
            if p.phase != "prepare" or p.height != vc.height or p.view >= vc.new_view:
                return False
            if not verify_qc(p, self.scheme, self.cfg):
                return False
        return True

    def record_vc(self, vc: ViewChange) -> None:
        s = self.s
        votes = dict(s.vc_votes.get(vc.new_view, {}))
        votes[vc.sender] = vc
        s.vc_votes[vc.new_view] = votes
        self.maybe_new_view()

    def maybe_new_view(self) -> None:
        s = self.s
        if not s.in_view_change or not self.is_leader():
            return
        votes = s.vc_votes.get(s.view, {})
        votes = {k: v for k, v in votes.items() if v.height == s.height}
        if not has_quorum(len(votes), self.cfg.n):
            return
        proofs = tuple(votes[m] for m in self.cfg.committee if m in votes)
        digest = choose_new_view_digest(proofs)
        if digest is None:
            digest = s.pending
        if digest is None:
            return
        nv = NewView(s.node, s.view, s.height, digest, proofs, b"")
        sig = self.sign(nv.signed_bytes())
        nv = NewView(s.node, s.view, s.height, digest, proofs, sig)
        self.broadcast(nv)
        s.in_view_change = False
        self.reset_timer()
        self.accept(s.view, s.height, digest, sig)

    def maybe_join(self) -> None:
        """Join a view change once f+1 peers have moved past our view."""
        s = self.s
        higher = []
        for view, votes in s.vc_votes.items():
            if view > s.view:
                higher.extend(view for vc in votes.values() if vc.height == s.height)
        if len(higher) < self.cfg.f + 1:
            return
        higher.sort(reverse=True)
        self.start_view_change(higher[self.cfg.f])


def choose_new_view_digest(proofs: Sequence[ViewChange]) -> Optional[bytes]:
    best = None
    for vc in proofs:
        p = vc.prepared
        if p is not None and (best is None or p.view > best.view):
            best = p
    return None if best is None else best.digest


def _verify_signed(t: _Step, msg) -> bool:
    if msg.sender not in t.cfg.committee:
        return False
    return t.scheme.verify(msg.sender, msg.signed_bytes(), msg.sig)


def step(
    state: ReplicaState,
    msg: ConsensusMessage,
    now: int,
    cfg: ConsensusConfig,
    scheme: SignatureScheme,
) -> tuple[ReplicaState, Outbound]:
    """Apply one message (or timer expiry) to a replica; returns (new state, outbound)."""
    t = _Step(state, now, cfg, scheme)
    s = t.s
    if isinstance(msg, SIGNED_TYPES) and not _verify_signed(t, msg):
        s.invalid += 1
        return s, t.out

    if isinstance(msg, Request):
        if msg.height != s.height or s.height in s.committed:
            return s, t.out
        s.pending = msg.digest
        if s.deadline is None:
            t.reset_timer()
        if t.is_leader() and not s.in_view_change and (s.view, s.height) not in s.accepted:
            t.propose(msg.digest)

    elif isinstance(msg, Timeout):
        if s.deadline is not None and now >= s.deadline and s.height not in s.committed:
            t.start_view_change(s.view + 1)

    elif isinstance(msg, PrePrepare):
        key = (msg.view, msg.height)
        if msg.sender != t.leader(msg.view) or msg.height != s.height:
            return s, t.out
        prior = s.accepted.get(key)
        if prior is not None:
            if prior != msg.digest:
                t.record_evidence(msg.sender, "equivocation", msg.view, msg.height,
                                  s.leader_stmt[key] + prior, msg.sig + msg.digest)
                if msg.view == s.view and not s.in_view_change:
                    t.start_view_change(s.view + 1)
            return s, t.out
        if msg.view != s.view or s.in_view_change:
            return s, t.out
        if s.deadline is None:
            t.reset_timer()
        t.accept(msg.view, msg.height, msg.digest, msg.sig)

    elif isinstance(msg, Prepare):
        if msg.height != s.height:
            return s, t.out
        key = (msg.view, msg.height)
        if cfg.mode is Mode.CLASSICAL and msg.pp_sig:
            _check_pp_equivocation(t, msg)
        if cfg.mode is Mode.MULTISIG and t.leader(msg.view) != s.node:
            return s, t.out
        t.add_vote("prepare_votes", key, msg.digest, msg.sender, msg.sig)
        if msg.view == s.view:
            t.check_prepared()

    elif isinstance(msg, Commit):
        if msg.height != s.height:
            return s, t.out
        key = (msg.view, msg.height)
        if cfg.mode is Mode.MULTISIG and t.leader(msg.view) != s.node:
            return s, t.out
        t.add_vote("commit_votes", key, msg.digest, msg.sender, msg.sig)
        if cfg.mode is Mode.CLASSICAL:
            signers = s.commit_votes[key][msg.digest]
            if has_quorum(len(signers), cfg.n) and s.height not in s.committed:
                t.commit(t.make_qc("commit", key, msg.digest, signers))
        elif msg.view == s.view:
            t.check_committed()

    elif isinstance(msg, CertMsg):
        qc = msg.qc
        if msg.sender != t.leader(qc.view) or not verify_qc(qc, scheme, cfg):
            if msg.sender == t.leader(qc.view):
                t.record_evidence(msg.sender, "invalid_qc", qc.view, qc.height,
                                  msg.signed_bytes(), msg.sig)
            s.invalid += 1
            return s, t.out
        if qc.height != s.height:
            return s, t.out
        key = (qc.view, qc.height)
        prior = s.accepted.get(key)
        if prior is not None and prior != qc.digest:
            t.record_evidence(msg.sender, "equivocation", qc.view, qc.height,
                              s.leader_stmt[key] + prior, msg.sig + qc.digest)
        if qc.phase == "commit":
            t.commit(qc)
        elif qc.phase == "prepare" and qc.view == s.view and not s.in_view_change:
            if s.phase < Phase.PREPARED:
                s.accepted[key] = qc.digest
                s.leader_stmt[key] = msg.sig
                t.become_prepared(qc)

    elif isinstance(msg, ViewChange):
        if not t.valid_vc(msg):
            s.invalid += 1
            return s, t.out
        if msg.height < s.height:
            qc = s.commit_qcs.get(msg.height)
            if qc is not None:
                t.send(msg.sender, Decided(s.node, msg.height, qc))
            return s, t.out
        if msg.height > s.height:
            return s, t.out
        t.record_vc(msg)
        if msg.new_view > s.view:
            t.maybe_join()

    elif isinstance(msg, NewView):
        if msg.height != s.height or msg.view < s.view or msg.sender != t.leader(msg.view):
            return s, t.out
        if msg.view == s.view and not s.in_view_change:
            return s, t.out
        if not _valid_new_view(t, msg):
            s.invalid += 1
            return s, t.out
        s.view = msg.view
        s.in_view_change = False
        s.phase = Phase.IDLE
        t.reset_timer()
        t.accept(msg.view, msg.height, msg.digest, msg.sig)

    elif isinstance(msg, Decided):
        qc = msg.qc
        if qc.phase == "commit" and qc.height == msg.height and verify_qc(qc, scheme, cfg):
            t.commit(qc)
        else:
            s.invalid += 1

    return s, t.out


def _check_pp_equivocation(t: _Step, msg: Prepare) -> None:
    s = t.s
    key = (msg.view, msg.height)
    mine = s.accepted.get(key)
    if mine is None or mine == msg.digest:
        return
    leader = t.leader(msg.view)
    pp = vote_message("preprepare", msg.view, msg.height, msg.digest)
    if not t.scheme.verify(leader, pp, msg.pp_sig):
        return
    t.record_evidence(leader, "equivocation", msg.view, msg.height,
                      s.leader_stmt[key] + mine, msg.pp_sig + msg.digest)
    if msg.view == s.view and not s.in_view_change and s.height not in s.committed:
        t.start_view_change(s.view + 1)


def _valid_new_view(t: _Step, msg: NewView) -> bool:
    senders = set()
    for vc in msg.proofs:
        if vc.new_view != msg.view or vc.height != msg.height:
            return False
        if not t.valid_vc(vc):
            return False
        senders.add(vc.sender)
    if not has_quorum(len(senders), t.cfg.n):
        return False
    locked = choose_new_view_digest(msg.proofs)
    return locked is None or locked == msg.digest
