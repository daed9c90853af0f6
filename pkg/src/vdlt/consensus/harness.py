"""Runs a committee of replicas over the netsim fabric.

Byzantine behaviors live here, in per-node outbound adapters, so the
replica code itself stays fault-agnostic.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field, replace
from typing import Optional

from ..core_types import NodeId
from ..netsim import Behavior, Fabric, FaultEntry, FaultPlan, LatencyModel
from .protocol import (
    SIGNED_TYPES,
    Commit,
    ConsensusConfig,
    Evidence,
    Mode,
    NewView,
    PrePrepare,
    Prepare,
    QuorumCert,
    CertMsg,
    Request,
    Timeout,
    Share,
    aggregate,
    alternate_digest,
    has_quorum,
    leader_for,
    new_replica,
    step,
    vote_message,
)
from .signatures import SignatureScheme, SimulatedScheme

BYZANTINE_BEHAVIORS = (Behavior.EQUIVOCATE, Behavior.CORRUPT_SIG)


@dataclass
class InstanceResult:
    height: int
    start: int
    end: int
    committed: dict[NodeId, bytes] = field(default_factory=dict)
    commit_times: dict[NodeId, int] = field(default_factory=dict)
    commit_qc: Optional[QuorumCert] = None
    messages: int = 0
    invalid: int = 0
    max_view: int = 0
    evidence: list[Evidence] = field(default_factory=list)
    byzantine: frozenset = frozenset()
    expected: frozenset = frozenset()

    @property
    def honest_commits(self) -> dict[NodeId, bytes]:
        return {n: d for n, d in self.committed.items() if n not in self.byzantine}

    @property
    def conflicting(self) -> bool:
        return len(set(self.honest_commits.values())) > 1

    @property
    def complete(self) -> bool:
        return self.expected <= set(self.committed)

    @property
    def digest(self) -> Optional[bytes]:
        vals = set(self.honest_commits.values())
        return next(iter(vals)) if len(vals) == 1 else None

    @property
    def latency(self) -> Optional[int]:
        times = [self.commit_times[n] for n in self.expected if n in self.commit_times]
        if not times or not self.complete:
            return None
        return max(times) - self.start


class ConsensusHarness:
    def __init__(
        self,
        cfg: ConsensusConfig,
        scheme: Optional[SignatureScheme] = None,
        seed: int = 0,
        latency: Optional[LatencyModel] = None,
        plan: Optional[FaultPlan] = None,
        start: int = 0,
        salt: str = "",
        height: int = 1,
    ):
        self.cfg = cfg
        self.scheme = scheme if scheme is not None else SimulatedScheme(seed)
        self.fabric = Fabric(cfg.committee, seed=seed, latency=latency, now=start, salt=salt)
        if plan is not None:
            self.fabric.inject(plan)
        self.states = {n: new_replica(n, self.scheme, height=height) for n in cfg.committee}
        self.messages = 0
        self._alt_certs: set = set()

    @property
    def byzantine(self) -> frozenset:
        return frozenset(
            e.node for e in self.fabric.plan.entries if e.behavior in BYZANTINE_BEHAVIORS
        )

    # -- outbound adapters ------------------------------------------------

    def _resign(self, src: NodeId, msg):
        secret = self.states[src].secret
        return replace(msg, sig=self.scheme.sign(secret, msg.signed_bytes()))

    def _equivocate(self, src: NodeId, to: NodeId, msg) -> list:
        others = [m for m in self.cfg.committee if m != src]
        second_half = set(others[len(others) // 2:])
        if isinstance(msg, (PrePrepare, NewView)):
            if to not in second_half:
                return [msg]
            return [self._resign(src, replace(msg, digest=alternate_digest(msg.digest)))]
        if isinstance(msg, (Prepare, Commit)):
            alt = replace(msg, digest=alternate_digest(msg.digest))
            if isinstance(alt, Prepare):
                pp_sig = b""
                if leader_for(alt.view, self.cfg) == src:
                    pp_sig = self.scheme.sign(
                        self.states[src].secret,
                        vote_message("preprepare", alt.view, alt.height, alt.digest),
                    )
                alt = replace(alt, pp_sig=pp_sig)
            return [msg, self._resign(src, alt)]
        if isinstance(msg, CertMsg) and to in second_half:
            return []
        return [msg]

    @staticmethod
    def _corrupt(msg):
        if not isinstance(msg, SIGNED_TYPES):
            return msg
        bad = bytes([msg.sig[0] ^ 0xFF]) + msg.sig[1:] if msg.sig else b"\x00"
        if isinstance(msg, CertMsg):
            q = msg.qc
            qc = replace(q, agg_sig=bytes([q.agg_sig[0] ^ 0xFF]) + q.agg_sig[1:])
            return replace(msg, qc=qc, sig=bad)
        return replace(msg, sig=bad)

    def _dispatch(self, src: NodeId, outbound, now: int) -> None:
        behaviors = {e.behavior for e in self.fabric.behaviors(src, now)}
        for to, msg in outbound:
            msgs = [msg]
            if Behavior.EQUIVOCATE in behaviors:
                msgs = self._equivocate(src, to, msg)
            if Behavior.CORRUPT_SIG in behaviors:
                msgs = [self._corrupt(m) for m in msgs]
            for m in msgs:
                self.messages += 1
                self.fabric.send(m, src, to, now)

    def _collude(self, src: NodeId, now: int) -> None:
        """An equivocating leader certifies the alternate digest for the second half."""
        if self.cfg.mode is not Mode.MULTISIG:
            return
        state = self.states[src]
        others = [m for m in self.cfg.committee if m != src]
        second_half = others[len(others) // 2:]
        for phase, table in (("prepare", state.prepare_votes), ("commit", state.commit_votes)):
            for (view, height), per_digest in table.items():
                if leader_for(view, self.cfg) != src:
                    continue
                base = state.accepted.get((view, height))
                if base is None:
                    continue
                alt = alternate_digest(base)
                tag = (phase, view, height)
                if tag in self._alt_certs:
                    continue
                signers = dict(per_digest.get(alt, {}))
                signers[src] = self.scheme.sign(
                    state.secret, vote_message(phase, view, height, alt))
                if not has_quorum(len(signers), self.cfg.n):
                    continue
                shares = [Share(n, alt, sig) for n, sig in signers.items()]
                qc = aggregate(shares, alt, self.cfg, self.scheme, phase, view, height,
                               verify_shares=False)
                self._alt_certs.add(tag)
                cert = self._resign(src, CertMsg(src, qc, b""))
                for to in second_half:
                    self.messages += 1
                    self.fabric.send(cert, src, to, now)

    def _step(self, node: NodeId, msg, now: int) -> None:
        new, out = step(self.states[node], msg, now, self.cfg, self.scheme)
        self.states[node] = new
        self._dispatch(node, out, now)
        if self.fabric.has_behavior(node, Behavior.EQUIVOCATE, now):
            self._collude(node, now)

    # -- driver -------------------------------------------------------------

    def run_instance(
        self,
        digest: bytes,
        start: Optional[int] = None,
        max_ticks: Optional[int] = None,
    ) -> InstanceResult:
        fab = self.fabric
        start = fab.now if start is None else start
        if start > fab.now:
            fab.run_until(start)
        horizon = start + (max_ticks if max_ticks is not None else 20 * self.cfg.view_timeout)
        height = min(s.height for s in self.states.values())
        msgs_before = self.messages
        byz = self.byzantine
        result = InstanceResult(height=height, start=start, end=start, byzantine=byz)

        def record(now: int) -> None:
            for n, s in self.states.items():
                if height in s.committed and n not in result.committed:
                    result.committed[n] = s.committed[height]
                    result.commit_times[n] = now
                    if result.commit_qc is None and n not in byz:
                        result.commit_qc = s.commit_qcs[height]

        def expected_now(now: int) -> frozenset:
            return frozenset(
                n for n in self.cfg.committee if n not in byz and not fab.is_crashed(n, now)
            )

        for n in self.cfg.committee:
            if not fab.is_crashed(n, start):
                self._step(n, Request(height, digest), start)
        record(start)

        now = start
        while not expected_now(now) <= set(result.committed):
            candidates = []
            t_ev = fab.next_time()
            if t_ev is not None:
                candidates.append(t_ev)
            for n, s in self.states.items():
                if s.deadline is not None and height not in s.committed:
                    if not fab.is_crashed(n, now):
                        candidates.append(max(s.deadline, now + (s.deadline <= now)))
            if not candidates:
                break
            now = min(candidates)
            if now > horizon:
                break
            for ev in fab.run_until(now):
                self._step(ev.dst, ev.payload, now)
            for n, s in list(self.states.items()):
                d = self.states[n].deadline
                if d is not None and d <= now and not fab.is_crashed(n, now):
                    if height not in self.states[n].committed:
                        self._step(n, Timeout(), now)
            record(now)

        result.end = now
        result.expected = expected_now(now)
        result.messages = self.messages - msgs_before
        result.invalid = sum(s.invalid for s in self.states.values())
        result.max_view = max(s.view for s in self.states.values())
        seen = []
        for s in self.states.values():
            for ev in s.evidence:
                if ev not in seen:
                    seen.append(ev)
        result.evidence = seen
        return result


def run_consensus(
    committee,
    digest: bytes,
    mode: Mode = Mode.MULTISIG,
    view_timeout: int = 50,
    seed: int = 0,
    latency: Optional[LatencyModel] = None,
    plan: Optional[FaultPlan] = None,
    start: int = 0,
    salt: str = "",
    scheme: Optional[SignatureScheme] = None,
    max_ticks: Optional[int] = None,
) -> InstanceResult:
    cfg = ConsensusConfig(tuple(committee), mode, view_timeout)
    h = ConsensusHarness(cfg, scheme=scheme, seed=seed, latency=latency, plan=plan,
                         start=start, salt=salt)
    return h.run_instance(digest, start=start, max_ticks=max_ticks)


def committee_ids(n: int, prefix: str = "r") -> tuple[str, ...]:
    return tuple(f"{prefix}{i}" for i in range(n))


BYZANTINE_MIX = (Behavior.EQUIVOCATE, Behavior.CORRUPT_SIG, Behavior.SILENCE)


def random_byzantine_plan(committee, f: int, rng: random.Random, horizon: int) -> FaultPlan:
    """Up to ``f`` faulty nodes drawn from the equivocate / corrupt-sig / silence mix.

    Half of the plans make the view-0 leader faulty.
    """
    committee = list(committee)
    if f == 0:
        return FaultPlan()
    if rng.random() < 0.5:
        chosen = [committee[0]] + rng.sample(committee[1:], f - 1)
    else:
        chosen = rng.sample(committee, f)
    entries = []
    for node in chosen:
        behavior = rng.choice(BYZANTINE_MIX)
        entries.append(FaultEntry(node, 0, horizon, behavior))
    return FaultPlan(tuple(entries))


def safety_run(n: int, seed: int, mode: Optional[Mode] = None, view_timeout: int = 30) -> InstanceResult:
    """One randomized run with f faulty replicas and jittered latency."""
    rng = random.Random(seed * 7919 + n)
    committee = committee_ids(n)
    f = (n - 1) // 3
    mode = mode or (Mode.CLASSICAL if seed % 2 else Mode.MULTISIG)
    horizon = 40 * view_timeout
    plan = random_byzantine_plan(committee, f, rng, horizon)
    latency = LatencyModel(base=1, jitter="uniform", lo=0, hi=rng.randint(0, 4))
    digest = rng.randbytes(32)
    return run_consensus(committee, digest, mode, view_timeout, seed=seed, latency=latency,
                         plan=plan, salt=f"safety-{n}", max_ticks=horizon)


def liveness_run(n: int, mode: Mode = Mode.MULTISIG, view_timeout: int = 50, seed: int = 0,
                 crashes: Optional[int] = None) -> InstanceResult:
    """Synchronous latency with the first ``f`` leaders crashed (worst case for rotation)."""
    committee = committee_ids(n)
    f = (n - 1) // 3 if crashes is None else crashes
    horizon = 40 * view_timeout
    plan = FaultPlan(tuple(FaultEntry(committee[i], 0, horizon, Behavior.CRASH) for i in range(f)))
    digest = random.Random(seed).randbytes(32)
    return run_consensus(committee, digest, mode, view_timeout, seed=seed,
                         latency=LatencyModel(base=1), plan=plan, salt=f"live-{n}",
                         max_ticks=horizon)


def fault_free_messages(n: int, mode: Mode, seed: int = 0) -> int:
    committee = committee_ids(n)
    digest = random.Random(seed).randbytes(32)
    res = run_consensus(committee, digest, mode, seed=seed, latency=LatencyModel(base=1))
    if not res.complete:
        raise RuntimeError(f"fault-free run with n={n} did not commit")
    return res.messages
