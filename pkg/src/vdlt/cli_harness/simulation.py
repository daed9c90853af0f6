"""Epoch-driven simulation: arrivals, classification, queuing, control consensus,
allocation, execution consensus, economics and governance."""

from __future__ import annotations

import hashlib
import math
import random
import statistics
from collections import Counter, defaultdict
from dataclasses import dataclass
from typing import Optional

from ..allocation import (
    CLASS_PRIORITY,
    WINDOW,
    AllocationEnv,
    AllocationInstance,
    AllocationParams,
    RLConfig,
    decentralization_index,
    evaluate,
    solve,
    train_policy,
)
from ..consensus import ConsensusConfig, Mode, block_digest, leader_for
from ..consensus.harness import ConsensusHarness
from ..core_types import (
    Block,
    BlockKind,
    CosClass,
    QoSTargets,
    ResourceVector,
    Transaction,
    encode_cos,
    validate_transaction,
)
from ..economics import (
    GENESIS_SUPPLY,
    Economy,
    NoCollateral,
    PenaltyEvidence,
    TokenSupply,
    activity_score,
    required_stake,
)
from ..governance import (
    FACTOR_GROUPS,
    Amendment,
    AmendmentState,
    PollsClosed,
    StakeLedger,
    TestPeriodElapsed,
    VoteClosed,
    advance_amendment,
    tally_delegates,
)
from ..netsim import Behavior, FaultEntry, FaultPlan, LatencyModel, node_stream
from ..node_runtime import (
    CommitteeUnhealthy,
    HealthTable,
    Hierarchy,
    Local,
    LocalGroup,
    StabilityFloor,
    Substrate,
    block_producer,
    execute,
    joint_committee,
    route,
    virtualize,
)
from ..scheduler import ClassQueues, Dropped, SchedulerConfig, classify
from .scenario import Scenario

TREASURY = "treasury"


class SimulationError(RuntimeError):
    def __init__(self, epoch: int, phase: str, cause: Exception):
        super().__init__(f"epoch {epoch}, phase {phase}: {type(cause).__name__}: {cause}")
        self.epoch = epoch
        self.phase = phase
        self.cause = cause


@dataclass
class SimulationResult:
    summary: dict
    rows: list
    digest: str


@dataclass
class _TxRecord:
    tx: Transaction
    cls: CosClass
    target: str
    outcome: Optional[str] = None  # committed | dropped
    reason: str = ""
    commit_tick: Optional[int] = None
    cost: float = 0.0


def _poisson(rng: random.Random, lam: float) -> int:
    if lam <= 0:
        return 0
    limit, k, p = math.exp(-lam), 0, 1.0
    while True:
        p *= rng.random()
        if p <= limit:
            return k
        k += 1


def _p95(xs: list) -> float:
    s = sorted(xs)
    return float(s[max(0, math.ceil(0.95 * len(s)) - 1)])


def _class_map(d: dict) -> dict:
    return {CosClass.from_label(k): v for k, v in d.items()}


class Simulation:
    def __init__(self, sc: Scenario):
        self.sc = sc
        raw = sc.raw
        self.seed = raw["seed"]
        self.T = raw["epoch_ticks"]
        self.epochs = raw["duration"] + raw["drain_epochs"]
        self.trace = hashlib.sha256()
        self._build_topology(raw)
        self._build_scheduler(raw)
        self._build_consensus(raw)
        self._build_allocation(raw)
        self._build_economy(raw)
        self._build_governance(raw)
        self.records: dict[int, _TxRecord] = {}
        self.deferred: dict[str, list[int]] = {t: [] for t in self.targets}
        self.window: tuple = ()
        self.activity: dict[str, list[bool]] = {n: [] for n in self.profiles}
        self.rows: list = []
        self.next_tx = 0
        self.counters = Counter()
        self.msgs = {"control": [0, 0], "execution": [0, 0]}
        self.decentralization: list = []
        self.utilities: list = []
        self.violation_counts = Counter()
        self.control_blocks = 0
        self.user_blocks = 0
        self.elections: list = []
        self.slashes: list = []
        self.max_supply_ratio = 0.0

    # -- setup ----------------------------------------------------------------

    def _build_topology(self, raw: dict) -> None:
        topo = raw["topology"]
        profiles = self.sc.profiles()
        execs = [p for p in profiles.values() if p.role.is_execution]
        floor = StabilityFloor.from_executors(execs)
        if "control_floor" in topo:
            floor = StabilityFloor(
                topo["control_floor"].get("min_speed", floor.min_speed),
                topo["control_floor"].get("min_trust", floor.min_trust),
            )
        groups = defaultdict(lambda: ([], []))
        for n in topo["nodes"]:
            if n["role"] == "local_control":
                groups[n["group"]][0].append(n["id"])
            elif n["role"] == "execution":
                groups[n["group"]][1].append(n["id"])
        top = tuple(n["id"] for n in topo["nodes"] if n["role"] == "top_control")
        self.hier = Hierarchy(top, {g: LocalGroup(tuple(c), tuple(e)) for g, (c, e) in sorted(groups.items())})
        self.hier.validate()
        try:
            self.profiles = {nid: virtualize(p, p.role, self.hier, floor) for nid, p in profiles.items()}
        except ValueError as e:
            raise SimulationError(0, "setup", e) from e
        self.floor = floor
        self.health = HealthTable(self.profiles, topo["health_threshold"])
        total = ResourceVector()
        for p in self.profiles.values():
            total = total + p.capacity
        cap = ResourceVector.from_obj(topo["substrate_capacity"]) if "substrate_capacity" in topo else total
        self.substrate = Substrate(cap)
        try:
            for v in topo["virtual_dlts"]:
                self.substrate.admit(v["id"], ResourceVector.from_obj(v["reservation"]), v.get("owner", ""))
        except ValueError as e:
            raise SimulationError(0, "setup", e) from e
        self.targets = [f"g{g}" for g in sorted(self.hier.groups)] + ["top"]
        self.clients = {c["id"]: c for c in raw["clients"]}
        self.fault_entries = []
        last = max(self.epochs, 1)
        for f in raw["faults"]:
            self.fault_entries.append(
                FaultEntry(
                    f["node"],
                    f.get("from_epoch", 0) * self.T,
                    (f.get("to_epoch", last) + 1) * self.T - 1,
                    Behavior(f["behavior"]),
                    f.get("p", 1.0),
                )
            )

    def _build_scheduler(self, raw: dict) -> None:
        s = raw["scheduler"]
        self.sched_cfg = SchedulerConfig(
            weights={k: int(v) for k, v in _class_map(s["weights"]).items()},
            capacities={k: int(v) for k, v in _class_map(s["capacities"]).items()},
            trust_threshold=s["trust_threshold"],
        )
        self.budget = s["batch_budget"]
        self.queues = {t: ClassQueues(self.sched_cfg) for t in self.targets}

    def _build_consensus(self, raw: dict) -> None:
        c = raw["consensus"]
        self.mode = Mode(c["mode"])
        self.view_timeout = c["view_timeout"]
        self.latency = LatencyModel(**c["latency"])
        self.heights = Counter()

    def _build_allocation(self, raw: dict) -> None:
        a = raw["allocation"]
        self.solver = a["solver"]
        self.params = AllocationParams(
            class_values={**AllocationParams().class_values, **_class_map(a["class_values"])},
            lam=a["lambda"],
            consensus_a=a["consensus_a"],
            consensus_b=a["consensus_b"],
            control_overhead=ResourceVector.from_obj(a["control_overhead"]),
            max_committee_size=a["max_committee_size"],
            throughput_targets=_class_map(a["throughput_targets"]),
        )
        self.control_capacity = ResourceVector.from_obj(a["control_capacity"])
        self.gamma_de = a["gamma_de"]
        self.policy = None
        if self.solver == "qlearn":
            cfg = RLConfig(episodes=a["rl_episodes"], seed=self.seed)
            self.policy = train_policy(AllocationEnv(self.seed), cfg)
            self.trace.update(repr(sorted(self.policy.Q.items())).encode())

    def _build_economy(self, raw: dict) -> None:
        e = raw["economics"]
        balances = dict(e["genesis_balances"])
        for nid in self.profiles:
            balances.setdefault(nid, 0)
            balances[nid] += e["collateral"]
        stakes = {}
        for v in self.substrate.instances.values():
            if v.owner:
                need = required_stake(v.reservation.l1(), e["stake_rate"])
                stakes[v.owner] = stakes.get(v.owner, 0) + need
                balances[v.owner] = balances.get(v.owner, 0) + need
        listed = sum(balances.values())
        if listed > GENESIS_SUPPLY:
            raise SimulationError(0, "setup", ValueError("genesis balances exceed the genesis supply"))
        balances[TREASURY] = balances.get(TREASURY, 0) + GENESIS_SUPPLY - listed
        self.holders = sorted(h for h in e["genesis_balances"] if h != TREASURY)
        stake = StakeLedger(balances, raw["governance"]["lock_period"])
        supply = TokenSupply(GENESIS_SUPPLY, e["inflation_rate"], e["epochs_per_year"])
        self.econ = Economy(stake, supply, TREASURY)
        for nid in self.profiles:
            if e["collateral"]:
                self.econ.post_collateral(nid, e["collateral"])
        for owner, amount in sorted(stakes.items()):
            if amount:
                self.econ.post_collateral(owner, amount)
        self.reward_share = e["reward_share"]
        self.beta = e["slash_beta"]

    def _build_governance(self, raw: dict) -> None:
        g = raw["governance"]
        self.gov = g
        self.candidates = list(g.get("candidates") or self.hier.top)
        self.amendments = {a["id"]: Amendment(a["id"], a.get("label", "")) for a in g["amendments"]}

    # -- helpers ----------------------------------------------------------------

    def _digest_event(self, *parts) -> None:
        self.trace.update(repr(parts).encode() + b"\n")

    def _plan_for(self, committee) -> FaultPlan:
        members = set(committee)
        return FaultPlan(tuple(f for f in self.fault_entries if f.node in members))

    def _consensus(self, committee, digest: bytes, start: int, salt: str, key: str):
        cfg = ConsensusConfig(tuple(committee), self.mode, self.view_timeout)
        self.heights[key] += 1
        h = ConsensusHarness(cfg, seed=self.seed, latency=self.latency, plan=self._plan_for(committee),
                             start=start, salt=salt, height=self.heights[key])
        res = h.run_instance(digest, start=start, max_ticks=40 * self.view_timeout)
        self.trace.update(h.fabric.trace_digest().encode())
        return cfg, res

    def _commit_tick(self, res) -> Optional[int]:
        times = [t for n, t in res.commit_times.items() if n not in res.byzantine]
        return max(times) if times else None

    def _handle_evidence(self, res, committee, epoch: int) -> None:
        honest = sorted(n for n in committee if n not in res.byzantine)
        reporter = honest[0] if honest else TREASURY
        for ev in res.evidence:
            self.econ.log.record(ev.offender, ev.kind, ev.digest)
            pe = PenaltyEvidence(ev.offender, ev.digest, reporter, ev.kind)
            try:
                lost, paid = self.econ.slash(pe, self.beta)
            except NoCollateral:
                continue
            self.slashes.append({"epoch": epoch, "offender": ev.offender, "kind": ev.kind,
                                 "confiscated": -lost, "reporter": reporter, "reward": paid})

    def _trust_of(self, submitter: str) -> tuple[float, bool]:
        if submitter in self.profiles:
            p = self.profiles[submitter]
            return p.trust, p.role.is_control
        c = self.clients[submitter]
        return c.get("trust", 0.9), c.get("control", False)

    def _drop(self, rec: _TxRecord, reason: str) -> None:
        rec.outcome = "dropped"
        rec.reason = reason
        self.counters[f"drop:{reason}"] += 1

    # -- phases -------------------------------------------------------------------

    def _heartbeats(self, epoch: int) -> None:
        t0 = epoch * self.T
        for nid in sorted(self.profiles):
            received = True
            for f in self.fault_entries:
                if f.node != nid or not f.active(t0):
                    continue
                if f.behavior in (Behavior.CRASH, Behavior.SILENCE):
                    received = False
                elif f.behavior is Behavior.DROP_RATE:
                    rng = node_stream(self.seed, nid, f"heartbeat|{epoch}")
                    received = received and rng.random() >= f.p
            self.health.beat(nid, received, t0)

    def _arrivals(self, epoch: int) -> Counter:
        arrived = Counter()
        if epoch >= self.sc.raw["duration"]:
            return arrived
        t0 = epoch * self.T
        all_execs = self.hier.all_executors()
        known = set(self.profiles) | set(self.clients)
        for i, w in enumerate(self.sc.raw["workload"]):
            if epoch < w["start_epoch"] or ("stop_epoch" in w and epoch > w["stop_epoch"]):
                continue
            rng = node_stream(self.seed, f"workload-{i}", f"epoch-{epoch}")
            if w["process"] == "poisson":
                k = _poisson(rng, w["rate"])
            else:
                k = math.floor((epoch - w["start_epoch"] + 1) * w["rate"]) - math.floor(
                    (epoch - w["start_epoch"]) * w["rate"]
                )
            requested = CosClass.from_label(w["class"])
            for _ in range(k):
                j = w["demand_jitter"]
                scale = 1.0 + (rng.uniform(-j, j) if j else 0.0)
                demand = ResourceVector.from_obj(w["demand"]).scale(scale)
                qos = QoSTargets(
                    max_latency=w["max_latency"],
                    max_cost=w.get("max_cost", float("inf")),
                    privacy=w["privacy"],
                )
                tx = Transaction(self.next_tx, w["submitter"], encode_cos(requested, w["reserved_bits"]),
                                 demand, qos, t0, w["payload_size"], w["high_security"], w["scope"])
                self.next_tx += 1
                trust, is_ctrl = self._trust_of(tx.submitter)
                cls = classify(tx, trust, self.sched_cfg, is_ctrl)
                if w["scope"] == "local":
                    target = f"g{w['group']}"
                else:
                    r = route(tx, self.hier, all_execs)
                    target = f"g{r.group}" if isinstance(r, Local) else "top"
                rec = _TxRecord(tx, cls, target)
                self.records[tx.id] = rec
                arrived[cls] += 1
                if validate_transaction(tx, known):
                    self._drop(rec, "invalid")
                    continue
                try:
                    self.queues[target].enqueue(tx, cls)
                except Dropped:
                    self._drop(rec, "queue_full")
        return arrived

    def _committees(self, target: str) -> tuple[list, list]:
        if target == "top":
            control, execs = list(self.hier.top), self.hier.all_executors()
        else:
            g = self.hier.groups[int(target[1:])]
            control, execs = list(g.control), list(g.executors)
        return self.health.usable(control), self.health.usable(execs)

    def _process_target(self, epoch: int, target: str, committed_now: Counter, active: set) -> None:
        t0 = epoch * self.T
        q = self.queues[target]
        control, execs = self._committees(target)
        if not control or not execs:
            return
        batch = q.next_batch(self.budget) if len(q) else []
        pending_ids = []
        for tid in self.deferred[target] + [tx.id for tx in batch]:
            rec = self.records[tid]
            if t0 - rec.tx.submit_time > rec.tx.qos.max_latency:
                self._drop(rec, "expired")
            else:
                pending_ids.append(tid)
        self.deferred[target] = []
        if not pending_ids:
            return

        inst = AllocationInstance(
            pending=[self.records[t].tx for t in pending_ids],
            executors=[self.profiles[n] for n in execs],
            control_capacity=self.control_capacity,
            window=self.window,
            gamma_de=self.gamma_de,
            classes={t: self.records[t].cls for t in pending_ids},
            queue_wait={t: float(t0 - self.records[t].tx.submit_time) for t in pending_ids},
            params=self.params,
        )
        decision = solve(inst, self.solver, self.policy)
        ev = evaluate(inst, decision)
        self.utilities.append(ev.utility)
        for v in ev.violations:
            self.violation_counts[v] += 1
        assigned = dict(decision.delta)
        # Scavenger never runs ahead of backlogged traffic, including deferred work.
        others_waiting = any(q.occupancy(c) for c in CosClass if c is not CosClass.SCAVENGER) or any(
            self.records[t].cls is not CosClass.SCAVENGER for t in pending_ids if t not in assigned
        )
        if others_waiting:
            for t in [t for t in assigned if self.records[t].cls is CosClass.SCAVENGER]:
                del assigned[t]
        self._digest_event("decision", epoch, target, sorted(assigned.items()))

        digest = block_digest("control", epoch, target, sorted(assigned.items()))
        cfg, res = self._consensus(control, digest, t0, f"ctrl|{epoch}|{target}", f"ctrl-{target}")
        self.msgs["control"][0] += res.messages
        self._handle_evidence(res, control, epoch)
        t_ctrl = self._commit_tick(res)
        if res.digest != digest or t_ctrl is None:
            self.counters["control_failed"] += 1
            self.deferred[target] = pending_ids
            return
        self.msgs["control"][1] += 1
        self.control_blocks += 1
        leader = leader_for(res.commit_qc.view, cfg)
        ctrl_block = Block(BlockKind.CONTROL, res.height, leader, (digest.hex(),), res.commit_qc)
        self._digest_event("control", ctrl_block.height, ctrl_block.producer)
        active.update(n for n in control if n in res.committed)

        retry = []
        order = sorted(pending_ids, key=lambda t: (CLASS_PRIORITY.index(self.records[t].cls), t))
        for tid in order:
            rec = self.records[tid]
            held_back = rec.cls is CosClass.SCAVENGER and any(
                self.records[t].cls is not CosClass.SCAVENGER for t in retry
            )
            if tid not in assigned or held_back:
                retry.append(tid)
                continue
            executors = list(assigned[tid])
            committee = joint_committee(rec.tx, executors, control)
            if any(self.health.is_down(n) for n in committee):
                self.counters["down_in_committee"] += 1
            try:
                receipt, _proposal = execute(rec.tx, committee, self.profiles, t_ctrl, self.health,
                                             self.heights[f"exec-{target}"] + 1)
            except CommitteeUnhealthy:
                retry.append(tid)
                continue
            udigest = block_digest("user", tid, receipt.finish, tuple(committee))
            ecfg, eres = self._consensus(committee, udigest, receipt.finish, f"exec|{epoch}|{tid}",
                                         f"exec-{target}")
            self.msgs["execution"][0] += eres.messages
            self._handle_evidence(eres, committee, epoch)
            tick = self._commit_tick(eres)
            if eres.digest != udigest or tick is None:
                self.counters["execution_failed"] += 1
                retry.append(tid)
                continue
            self.msgs["execution"][1] += 1
            producer = block_producer(committee, leader_for(eres.commit_qc.view, ecfg), self.profiles)
            block = Block(BlockKind.USER, eres.height, producer, (tid,), eres.commit_qc)
            self.user_blocks += 1
            if not self.profiles[block.producer].role.is_execution:
                self.counters["user_blocks_by_control"] += 1
            rec.outcome = "committed"
            rec.commit_tick = tick
            rec.cost = ev.cost[tid]
            committed_now[rec.cls] += 1
            active.update(n for n in committee if n in eres.committed)
            self.window = (self.window + tuple(executors))[-WINDOW:]
            self._digest_event("user", tid, producer, tick)
        backlog = any(q.occupancy(c) for c in CosClass if c is not CosClass.SCAVENGER) or any(
            self.records[t].cls is not CosClass.SCAVENGER for t in retry
        )
        if backlog:
            self.counters["scavenger_served_while_backlogged"] += sum(
                1 for t in order
                if self.records[t].cls is CosClass.SCAVENGER and self.records[t].outcome == "committed"
            )
        self.deferred[target] = retry

    def _economics(self, epoch: int, active: set) -> dict:
        for n in self.profiles:
            self.activity[n].append(n in active)
        minted = self.econ.mint()
        budget = math.floor(minted * self.reward_share)
        participants = [(n, activity_score(self.activity[n])) for n in sorted(self.profiles)]
        payouts = self.econ.pay_rewards(budget, participants)
        supply = self.econ.supply
        ratio = supply.total / supply.cap_at(epoch + 1)
        self.max_supply_ratio = max(self.max_supply_ratio, ratio)
        if not self.econ.conserved():
            self.counters["conservation_failures"] += 1
        self._digest_event("econ", epoch, minted, sorted(payouts.items()), self.econ.burned)
        return {"minted": minted, "paid": sum(payouts.values())}

    def _governance(self, epoch: int) -> None:
        stake = self.econ.stake
        stake.expire_locks(epoch)
        every = self.gov["election_every"]
        if epoch > 0 and epoch % every == 0 and self.holders:
            rng = node_stream(self.seed, "governance", f"election-{epoch}")
            ballots = []
            for h in self.holders:
                bal = stake.balance(h)
                if bal < 1:
                    continue
                tokens = max(1, int(bal * rng.uniform(0.1, 0.5)))
                k = rng.randint(1, 3)
                ballots.append(stake.cast_vote(h, rng.choice(self.candidates), tokens, k, epoch))
            seats = min(self.gov["delegates"], len(self.candidates))
            elected = tally_delegates(ballots, seats) if ballots else []
            # seats nobody voted for stay with incumbents
            for n in self.hier.top:
                if len(elected) < seats and n not in elected:
                    elected.append(n)
            if elected:
                self.hier.top = tuple(elected)
                self.hier.validate()
            self.elections.append({"epoch": epoch, "delegates": list(elected)})
            self._digest_event("election", epoch, tuple(elected))
        for amd in self.gov["amendments"]:
            a = self.amendments[amd["id"]]
            if a.state is AmendmentState.REJECTED or a.state is AmendmentState.LIVE:
                continue
            event = None
            if epoch == amd["polls_epoch"]:
                event = PollsClosed(amd.get("polls") or {f: True for f in FACTOR_GROUPS})
            elif epoch == amd["vote1_epoch"]:
                event = VoteClosed(*amd.get("vote1", [1, 0]))
            elif epoch == amd["vote1_epoch"] + amd["test_epochs"] and a.state is AmendmentState.ON_TEST:
                event = TestPeriodElapsed()
            if event is not None:
                a = advance_amendment(a, event)
            if epoch == amd["vote2_epoch"] and a.state is AmendmentState.ON_TEST:
                a = advance_amendment(a, VoteClosed(*amd.get("vote2", [1, 0])))
                if a.state is AmendmentState.LIVE and "inflation_rate" in amd:
                    self.econ.supply.set_rate(amd["inflation_rate"])
            self.amendments[amd["id"]] = a

    # -- driver ---------------------------------------------------------------------

    def run(self) -> SimulationResult:
        for epoch in range(self.epochs):
            phase = "heartbeats"
            try:
                self._heartbeats(epoch)
                phase = "arrivals"
                arrived = self._arrivals(epoch)
                committed_now = Counter()
                active: set = set()
                for target in self.targets:
                    phase = f"allocate/execute {target}"
                    self._process_target(epoch, target, committed_now, active)
                phase = "economics"
                econ = self._economics(epoch, active)
                phase = "governance"
                self._governance(epoch)
            except SimulationError:
                raise
            except Exception as e:
                raise SimulationError(epoch, phase, e) from e
            self._epoch_rows(epoch, arrived, committed_now, econ)
        return SimulationResult(self._summary(), self.rows, self.trace.hexdigest())

    def _epoch_rows(self, epoch: int, arrived: Counter, committed_now: Counter, econ: dict) -> None:
        for c in CosClass:
            qlen = sum(q.occupancy(c) for q in self.queues.values())
            self.rows.append((epoch, c.label, "arrivals", arrived.get(c, 0)))
            self.rows.append((epoch, c.label, "committed", committed_now.get(c, 0)))
            self.rows.append((epoch, c.label, "queue_length", qlen))
        dec = decentralization_index(self.window) if self.window else 0.0
        self.decentralization.append(round(dec, 6))
        self.rows.append((epoch, "all", "decentralization", round(dec, 6)))
        self.rows.append((epoch, "all", "minted", econ["minted"]))
        self.rows.append((epoch, "all", "rewards_paid", econ["paid"]))
        self.rows.append((epoch, "all", "supply", self.econ.supply.total))
        self.rows.append((epoch, "all", "burned", self.econ.burned))

    def _summary(self) -> dict:
        per_class = {}
        for c in CosClass:
            recs = [r for r in self.records.values() if r.cls is c]
            done = [r for r in recs if r.outcome == "committed"]
            lat = [r.commit_tick - r.tx.submit_time for r in done]
            per_class[c.label] = {
                "submitted": len(recs),
                "committed": len(done),
                "dropped": sum(1 for r in recs if r.outcome == "dropped"),
                "mean_latency": round(statistics.fmean(lat), 6) if lat else None,
                "p95_latency": _p95(lat) if lat else None,
                "throughput": round(len(done) / self.epochs, 6) if self.epochs else 0.0,
                "mean_cost": round(statistics.fmean(r.cost for r in done), 6) if done else None,
            }
        committed = sum(1 for r in self.records.values() if r.outcome == "committed")
        dropped = sum(1 for r in self.records.values() if r.outcome == "dropped")
        pending = sum(1 for r in self.records.values() if r.outcome is None)
        in_queues = sum(len(q) for q in self.queues.values()) + sum(len(d) for d in self.deferred.values())
        econ = self.econ
        mpc = {
            k: (round(v[0] / v[1], 6) if v[1] else None) for k, v in self.msgs.items()
        }
        return {
            "scenario": self.sc.raw["name"],
            "seed": self.seed,
            "duration": self.sc.raw["duration"],
            "epochs_run": self.epochs,
            "consensus_mode": self.mode.value,
            "solver": self.solver,
            "classes": per_class,
            "accounting": {
                "submitted": len(self.records),
                "committed": committed,
                "dropped": dropped,
                "pending_at_end": pending,
                "pending_in_queues": in_queues,
                "drops_by_reason": {k[5:]: v for k, v in sorted(self.counters.items()) if k.startswith("drop:")},
            },
            "blocks": {"control": self.control_blocks, "user": self.user_blocks},
            "messages_per_commit": {"mode": self.mode.value, **mpc},
            "consensus_failures": {
                "control": self.counters["control_failed"],
                "execution": self.counters["execution_failed"],
            },
            "decentralization": self.decentralization,
            "allocation": {
                "mean_utility": round(statistics.fmean(self.utilities), 6) if self.utilities else None,
                "instances": len(self.utilities),
                "violations": dict(sorted(self.violation_counts.items())),
            },
            "economics": {
                "genesis": econ.supply.genesis,
                "minted": econ.supply.minted,
                "supply": econ.supply.total,
                "balances": sum(econ.stake.balances.values()),
                "locked": econ.stake.locked(),
                "collateral": sum(econ.collateral.values()),
                "burned": econ.burned,
                "treasury": econ.stake.balance(TREASURY),
                "slashes": self.slashes,
                "max_supply_to_cap": round(self.max_supply_ratio, 9),
            },
            "governance": {
                "elections": self.elections,
                "top_committee": list(self.hier.top),
                "amendments": {
                    k: {"state": a.state.value, "history": [s.value for s in a.history]}
                    for k, a in sorted(self.amendments.items())
                },
            },
            "virtual_dlts": [
                {"id": v.id, "owner": v.owner, "reservation": list(v.reservation.as_tuple())}
                for v in self.substrate.instances.values()
            ],
            "invariants": {
                "user_blocks_by_control": self.counters["user_blocks_by_control"],
                "scavenger_served_while_backlogged": self.counters["scavenger_served_while_backlogged"],
                "down_nodes_in_committees": self.counters["down_in_committee"],
                "conservation_failures": self.counters["conservation_failures"],
                "inflation_within_cap": self.max_supply_ratio <= 1.0,
                "accounting_balanced": committed + dropped + pending == len(self.records)
                and pending == in_queues,
            },
            "trace_digest": self.trace.hexdigest(),
        }


def run(sc: Scenario) -> SimulationResult:
    return Simulation(sc).run()
