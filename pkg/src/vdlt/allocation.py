"""Executor selection and resource shares under the decentralization, latency,
throughput, cost and privacy constraints.

Three solvers share one evaluation path: a class-priority greedy heuristic,
an exact branch-and-bound oracle for small instances, and a tabular
Q-learner that picks an allocation template per epoch.
"""

from __future__ import annotations

import hashlib
import itertools
import random
from collections import Counter
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Iterable, Mapping, Optional, Sequence

from .core_types import (
    CosClass,
    NodeId,
    NodeProfile,
    NodeRole,
    QoSTargets,
    ResourceVector,
    Transaction,
    encode_cos,
)

EPS = 1e-9
WINDOW = 100

DEFAULT_CLASS_VALUES = {
    CosClass.FAST_CONFIRMATION: 10.0,
    CosClass.COMPUTATION_INTENSIVE: 8.0,
    CosClass.STORAGE_INTENSIVE: 8.0,
    CosClass.LOW_COST: 3.0,
    CosClass.PRIVATE: 8.0,
    CosClass.BEST_EFFORT: 1.0,
    CosClass.SCAVENGER: 0.1,
    CosClass.MANAGEMENT_CONTROL: 10.0,
}

# processing order for the greedy solver
CLASS_PRIORITY = (
    CosClass.MANAGEMENT_CONTROL,
    CosClass.FAST_CONFIRMATION,
    CosClass.COMPUTATION_INTENSIVE,
    CosClass.STORAGE_INTENSIVE,
    CosClass.PRIVATE,
    CosClass.LOW_COST,
    CosClass.BEST_EFFORT,
    CosClass.SCAVENGER,
)
_RANK = {c: i for i, c in enumerate(CLASS_PRIORITY)}

CONSTRAINTS = ("C1", "C2", "C3", "C4", "C5", "capacity")


class MalformedDecision(ValueError):
    pass


class EmptyWindow(ValueError):
    pass


class TooLarge(ValueError):
    pass


@dataclass(frozen=True)
class AllocationParams:
    class_values: Mapping = field(default_factory=lambda: dict(DEFAULT_CLASS_VALUES))
    lam: float = 1.0
    consensus_a: float = 2.0
    consensus_b: float = 1.0
    control_overhead: ResourceVector = ResourceVector(0.1, 0.1, 0.1)
    max_committee_size: int = 3
    # minimum scheduled count per class and epoch
    throughput_targets: Mapping = field(default_factory=dict)

    def value(self, c: CosClass) -> float:
        return self.class_values.get(c, DEFAULT_CLASS_VALUES[c])

    def consensus_latency(self, size: int) -> float:
        return self.consensus_a + self.consensus_b * size


@dataclass
class AllocationInstance:
    pending: list
    executors: list
    loads: dict = field(default_factory=dict)
    control_capacity: ResourceVector = ResourceVector(100.0, 100.0, 100.0)
    window: tuple = ()
    gamma_de: float = 0.0
    classes: dict = field(default_factory=dict)
    queue_wait: dict = field(default_factory=dict)
    params: AllocationParams = field(default_factory=AllocationParams)

    def __post_init__(self) -> None:
        if not 0.0 <= self.gamma_de < 1.0:
            raise ValueError("gamma_de must lie in [0, 1)")
        for e in self.executors:
            if not self.load(e.id).fits_within(e.capacity):
                raise ValueError(f"load of {e.id} exceeds its capacity")

    @cached_property
    def nodes(self) -> dict:
        return {e.id: e for e in self.executors}

    @cached_property
    def txs(self) -> dict:
        return {t.id: t for t in self.pending}

    def load(self, node: NodeId) -> ResourceVector:
        return self.loads.get(node, ResourceVector())

    def remaining(self, node: NodeId) -> ResourceVector:
        return self.nodes[node].capacity - self.load(node)

    def class_of(self, tx: Transaction) -> CosClass:
        return self.classes.get(tx.id, tx.requested_class)

    def wait(self, tx: Transaction) -> float:
        return self.queue_wait.get(tx.id, 0.0)

    @cached_property
    def options(self) -> dict:
        """Per transaction, every committee that is feasible for it in isolation."""
        return {t.id: _individual_options(self, t) for t in self.pending}

    @cached_property
    def required(self) -> dict:
        """Per-class throughput floor, capped by the number of placeable transactions."""
        eligible = Counter(self.class_of(t) for t in self.pending if self.options[t.id])
        out = {}
        for c, target in self.params.throughput_targets.items():
            c = CosClass(c)
            out[c] = min(int(target), eligible.get(c, 0))
        return out


@dataclass(frozen=True)
class AllocationDecision:
    delta: Mapping = field(default_factory=dict)  # tx id -> tuple of node ids
    rho: Mapping = field(default_factory=dict)  # tx id -> ResourceVector
    s: Mapping = field(default_factory=dict)  # (tx id, node id) -> ResourceVector
    deferred: tuple = ()

    def key(self, order: Sequence[int]) -> tuple:
        return tuple(tuple(self.delta.get(t, ())) for t in order)


@dataclass(frozen=True)
class Evaluation:
    utility: float
    feasible: bool
    residuals: Mapping  # constraint name -> slack, >= 0 when satisfied
    latency: Mapping = field(default_factory=dict)
    cost: Mapping = field(default_factory=dict)

    @property
    def violations(self) -> list[str]:
        return [k for k, v in self.residuals.items() if v < -EPS]


def decentralization_index(assignments: Iterable[NodeId]) -> float:
    counts = Counter(assignments)
    total = sum(counts.values())
    if total == 0:
        raise EmptyWindow("decentralization index of an empty multiset")
    return 1.0 - sum((n / total) ** 2 for n in counts.values())


def build_decision(inst: AllocationInstance, delta: Mapping, deferred: Iterable[int] = ()) -> AllocationDecision:
    """Decision with control overhead and per-member shares equal to the demand."""
    delta = {t: tuple(c) for t, c in delta.items()}
    rho = {t: inst.params.control_overhead for t in delta}
    s = {(t, n): inst.txs[t].demand for t, c in delta.items() for n in c}
    return AllocationDecision(delta, rho, s, tuple(deferred))


def tx_latency(inst: AllocationInstance, tx: Transaction, committee: Sequence[NodeId]) -> float:
    slowest = min(inst.nodes[n].speed for n in committee)
    return inst.wait(tx) + inst.params.consensus_latency(len(committee)) + tx.demand.compute / slowest


def tx_cost(inst: AllocationInstance, share: Callable[[NodeId], ResourceVector], committee: Sequence[NodeId]) -> float:
    return sum(inst.nodes[n].cost_rate * share(n).l1() for n in committee)


def _check_refs(inst: AllocationInstance, d: AllocationDecision) -> None:
    for t, committee in d.delta.items():
        if t not in inst.txs:
            raise MalformedDecision(f"decision references unknown tx {t}")
        if not committee:
            raise MalformedDecision(f"tx {t} has an empty committee")
        if len(set(committee)) != len(committee):
            raise MalformedDecision(f"tx {t} lists a committee member twice")
        for n in committee:
            if n not in inst.nodes:
                raise MalformedDecision(f"tx {t} assigned to unknown node {n}")
            if (t, n) not in d.s:
                raise MalformedDecision(f"missing share for tx {t} on node {n}")
        if t not in d.rho:
            raise MalformedDecision(f"missing control share for tx {t}")
    for (t, n) in d.s:
        if t not in d.delta or n not in d.delta[t]:
            raise MalformedDecision(f"share for ({t}, {n}) outside the assignment")
    for t in d.rho:
        if t not in d.delta:
            raise MalformedDecision(f"control share for unassigned tx {t}")


def evaluate(inst: AllocationInstance, d: AllocationDecision) -> Evaluation:
    _check_refs(inst, d)
    p = inst.params
    utility = 0.0
    latency, cost = {}, {}
    r2 = r4 = float("inf")
    privacy_bad = 0
    scheduled = Counter()
    for t, committee in d.delta.items():
        tx = inst.txs[t]
        c = inst.class_of(tx)
        scheduled[c] += 1
        latency[t] = tx_latency(inst, tx, committee)
        cost[t] = tx_cost(inst, lambda n: d.s[(t, n)], committee)
        utility += p.value(c) - p.lam * cost[t]
        r2 = min(r2, tx.qos.max_latency - latency[t])
        r4 = min(r4, tx.qos.max_cost - cost[t])
        if tx.qos.privacy == 1:
            privacy_bad += sum(1 for n in committee if not inst.nodes[n].privacy_capable)

    assigned = [n for t in sorted(d.delta) for n in d.delta[t]]
    window = list(inst.window)[-WINDOW:]
    combined = (window + assigned)[-WINDOW:]
    if combined and window:
        threshold = min(inst.gamma_de, decentralization_index(window))
        r1 = decentralization_index(combined) - threshold
    else:
        r1 = 0.0

    r3 = 0.0
    for c, need in inst.required.items():
        r3 = min(r3, scheduled[c] - need)

    cap = float("inf")
    used = {n: ResourceVector() for n in inst.nodes}
    for (t, n), share in d.s.items():
        used[n] = used[n] + share
    for n, u in used.items():
        slack = inst.remaining(n) - u
        cap = min(cap, slack.compute, slack.storage, slack.bandwidth)
    ctrl = ResourceVector()
    for v in d.rho.values():
        ctrl = ctrl + v
    slack = inst.control_capacity - ctrl
    cap = min(cap, slack.compute, slack.storage, slack.bandwidth)

    residuals = {
        "C1": r1,
        "C2": 0.0 if r2 == float("inf") else r2,
        "C3": float(r3),
        "C4": 0.0 if r4 == float("inf") else r4,
        "C5": -float(privacy_bad),
        "capacity": cap,
    }
    feasible = all(v >= -EPS for v in residuals.values())
    return Evaluation(utility, feasible, residuals, latency, cost)


def _individual_options(inst: AllocationInstance, tx: Transaction) -> list[tuple]:
    p = inst.params
    if not tx.demand.is_nonnegative():
        return []
    if not p.control_overhead.fits_within(inst.control_capacity):
        return []
    ids = sorted(inst.nodes)
    if tx.qos.privacy == 1:
        ids = [n for n in ids if inst.nodes[n].privacy_capable]
    ids = [n for n in ids if tx.demand.fits_within(inst.remaining(n))]
    out = []
    for k in range(1, min(p.max_committee_size, len(ids)) + 1):
        for committee in itertools.combinations(ids, k):
            if tx_latency(inst, tx, committee) > tx.qos.max_latency + EPS:
                continue
            if tx_cost(inst, lambda n: tx.demand, committee) > tx.qos.max_cost + EPS:
                continue
            out.append(committee)
    return out


def _gain(inst: AllocationInstance, tx: Transaction, committee: Sequence[NodeId]) -> float:
    p = inst.params
    return p.value(inst.class_of(tx)) - p.lam * tx_cost(inst, lambda n: tx.demand, committee)


# -- greedy ------------------------------------------------------------------


def _priority_key(inst: AllocationInstance, tx: Transaction):
    return (_RANK[inst.class_of(tx)], tx.submit_time, tx.id)


def _preference(inst: AllocationInstance, tx: Transaction, committee: tuple):
    cost = tx_cost(inst, lambda n: tx.demand, committee)
    if inst.class_of(tx) is CosClass.FAST_CONFIRMATION:
        trust = min(inst.nodes[n].trust for n in committee)
        return (len(committee), -trust, cost, committee)
    return (cost, len(committee), committee)


class _Partial:
    """Incremental capacity and decentralization bookkeeping for constructive solvers."""

    def __init__(self, inst: AllocationInstance):
        self.inst = inst
        self.used = {n: ResourceVector() for n in inst.nodes}
        self.ctrl = ResourceVector()
        self.delta: dict = {}
        self.window = list(inst.window)[-WINDOW:]
        self.threshold = (
            min(inst.gamma_de, decentralization_index(self.window)) if self.window else None
        )

    def fits(self, tx: Transaction, committee) -> bool:
        inst = self.inst
        if not (self.ctrl + inst.params.control_overhead).fits_within(inst.control_capacity):
            return False
        return all((self.used[n] + tx.demand).fits_within(inst.remaining(n)) for n in committee)

    def c1_ok(self, tx: Transaction, committee) -> bool:
        if self.threshold is None:
            return True
        trial = dict(self.delta)
        trial[tx.id] = committee
        assigned = [n for t in sorted(trial) for n in trial[t]]
        combined = (self.window + assigned)[-WINDOW:]
        return decentralization_index(combined) >= self.threshold - EPS

    def place(self, tx: Transaction, committee) -> None:
        for n in committee:
            self.used[n] = self.used[n] + tx.demand
        self.ctrl = self.ctrl + self.inst.params.control_overhead
        self.delta[tx.id] = tuple(committee)

    def try_place(self, tx: Transaction, candidates) -> bool:
        for committee in candidates:
            if self.fits(tx, committee) and self.c1_ok(tx, committee):
                self.place(tx, committee)
                return True
        return False


def solve_greedy(inst: AllocationInstance) -> AllocationDecision:
    """Class-priority construction, then one pass of single-reassignment hill climbing.

    Throughput floors are honoured first: the required number of each class
    is placed before the remaining transactions are considered.
    """
    order = sorted(inst.pending, key=lambda t: _priority_key(inst, t))
    cands = {t.id: sorted(inst.options[t.id], key=lambda c, t=t: _preference(inst, t, c)) for t in order}
    part = _Partial(inst)

    need = dict(inst.required)
    for tx in order:
        c = inst.class_of(tx)
        if need.get(c, 0) > 0 and part.try_place(tx, cands[tx.id]):
            need[c] -= 1
    for tx in order:
        if tx.id not in part.delta:
            part.try_place(tx, cands[tx.id])

    delta = dict(part.delta)
    best = build_decision(inst, delta)
    best_eval = evaluate(inst, best)
    for tx in order:
        for alt in [None] + cands[tx.id]:
            if alt == delta.get(tx.id):
                continue
            trial = dict(delta)
            if alt is None:
                trial.pop(tx.id, None)
            else:
                trial[tx.id] = alt
            d = build_decision(inst, trial)
            ev = evaluate(inst, d)
            if ev.feasible and (ev.utility > best_eval.utility + EPS or not best_eval.feasible):
                delta, best, best_eval = trial, d, ev
    deferred = tuple(t.id for t in order if t.id not in delta)
    return build_decision(inst, delta, deferred)


# -- exhaustive oracle ---------------------------------------------------------

MAX_EXHAUSTIVE_EXECUTORS = 10
MAX_EXHAUSTIVE_TXS = 8


def solve_exhaustive(inst: AllocationInstance) -> AllocationDecision:
    """Exact optimum by branch and bound over committees (or deferral) per transaction.

    Ties on utility go to the lexicographically smallest assignment, taken
    over transactions in id order with deferral encoded as the empty tuple.
    """
    if len(inst.executors) > MAX_EXHAUSTIVE_EXECUTORS:
        raise TooLarge(f"{len(inst.executors)} executors > {MAX_EXHAUSTIVE_EXECUTORS}")
    if len(inst.pending) > MAX_EXHAUSTIVE_TXS:
        raise TooLarge(f"{len(inst.pending)} transactions > {MAX_EXHAUSTIVE_TXS}")

    txs = sorted(inst.pending, key=lambda t: t.id)
    order = [t.id for t in txs]
    opts = []
    for tx in txs:
        scored = [((), 0.0)] + [(c, _gain(inst, tx, c)) for c in inst.options[tx.id]]
        scored.sort(key=lambda cg: (-cg[1], cg[0]))
        opts.append(scored)
    tail_bound = [0.0] * (len(txs) + 1)
    for i in range(len(txs) - 1, -1, -1):
        tail_bound[i] = tail_bound[i + 1] + max(0.0, opts[i][0][1])
    remaining_of_class = [Counter() for _ in range(len(txs) + 1)]
    for i in range(len(txs) - 1, -1, -1):
        remaining_of_class[i] = remaining_of_class[i + 1] + Counter({inst.class_of(txs[i]): 1})

    part = _Partial(inst)
    best = {"u": float("-inf"), "key": None, "delta": {}}
    counts = Counter()

    def consider() -> None:
        d = build_decision(inst, part.delta)
        ev = evaluate(inst, d)
        if not ev.feasible:
            return
        key = d.key(order)
        if ev.utility > best["u"] + EPS or (abs(ev.utility - best["u"]) <= EPS and key < best["key"]):
            best.update(u=ev.utility, key=key, delta=dict(part.delta))

    def rec(i: int, acc: float) -> None:
        if acc + tail_bound[i] < best["u"] - EPS:
            return
        for c, need in inst.required.items():
            if counts[c] + remaining_of_class[i][c] < need:
                return
        if i == len(txs):
            consider()
            return
        tx = txs[i]
        for committee, g in opts[i]:
            if not committee:
                rec(i + 1, acc)
                continue
            if not part.fits(tx, committee):
                continue
            saved_used = {n: part.used[n] for n in committee}
            saved_ctrl = part.ctrl
            part.place(tx, committee)
            counts[inst.class_of(tx)] += 1
            rec(i + 1, acc + g)
            counts[inst.class_of(tx)] -= 1
            del part.delta[tx.id]
            part.used.update(saved_used)
            part.ctrl = saved_ctrl

    rec(0, 0.0)
    delta = best["delta"]
    return build_decision(inst, delta, tuple(t for t in order if t not in delta))


# -- tabular Q-learning ----------------------------------------------------------


@dataclass(frozen=True)
class RLConfig:
    alpha: float = 0.2
    discount: float = 0.5
    epsilon_start: float = 1.0
    epsilon_end: float = 0.05
    episodes: int = 5000
    seed: int = 42
    penalty: float = 5.0

    def __post_init__(self) -> None:
        if not 0.0 < self.alpha <= 1.0:
            raise ValueError("alpha must lie in (0, 1]")
        if not 0.0 <= self.discount < 1.0:
            raise ValueError("discount must lie in [0, 1)")
        if not 0.0 <= self.epsilon_end <= self.epsilon_start <= 1.0:
            raise ValueError("need 0 <= epsilon_end <= epsilon_start <= 1")
        if self.episodes < 0:
            raise ValueError("episodes must be >= 0")

    def epsilon(self, episode: int) -> float:
        """Linear decay from start to end over the first 80% of training."""
        horizon = max(1, int(0.8 * self.episodes))
        frac = min(1.0, episode / horizon)
        return self.epsilon_start + (self.epsilon_end - self.epsilon_start) * frac


def q_update(Q: dict, s: int, a: int, r: float, s_next: int, cfg: RLConfig, n_actions: Optional[int] = None) -> dict:
    """Bellman update in place; returns ``Q`` for chaining. Missing entries read as 0."""
    n_actions = n_actions if n_actions is not None else len(TEMPLATES)
    best_next = max(Q.get((s_next, b), 0.0) for b in range(n_actions))
    old = Q.get((s, a), 0.0)
    Q[(s, a)] = old + cfg.alpha * (r + cfg.discount * best_next - old)
    return Q


STATE_CLASSES = (
    CosClass.FAST_CONFIRMATION,
    CosClass.COMPUTATION_INTENSIVE,
    CosClass.STORAGE_INTENSIVE,
    CosClass.PRIVATE,
    CosClass.LOW_COST,
    CosClass.BEST_EFFORT,
    CosClass.SCAVENGER,
)


def _bucket(n: int) -> int:
    return 0 if n == 0 else (1 if n <= 3 else 2)


def state_id(inst: AllocationInstance) -> int:
    occ = Counter(inst.class_of(t) for t in inst.pending)
    sid = 0
    for c in STATE_CLASSES:
        sid = sid * 3 + _bucket(occ.get(c, 0))
    util = [
        max(inst.load(e.id).compute / e.capacity.compute if e.capacity.compute > 0 else 1.0, 0.0)
        for e in inst.executors
    ]
    high = 1 if util and sum(util) / len(util) >= 0.5 else 0
    return sid * 2 + high


def _template(inst: AllocationInstance, rank) -> AllocationDecision:
    order = sorted(inst.pending, key=lambda t: _priority_key(inst, t))
    part = _Partial(inst)
    for tx in order:
        part.try_place(tx, sorted(inst.options[tx.id], key=lambda c, tx=tx: rank(tx, c, part)))
    delta = dict(part.delta)
    return build_decision(inst, delta, tuple(t.id for t in order if t.id not in delta))


def template_smallest_trusted(inst: AllocationInstance) -> AllocationDecision:
    return _template(
        inst, lambda tx, c, part: (len(c), -min(inst.nodes[n].trust for n in c), c)
    )


def template_cheapest(inst: AllocationInstance) -> AllocationDecision:
    return _template(inst, lambda tx, c, part: (tx_cost(inst, lambda n: tx.demand, c), c))


def template_spread(inst: AllocationInstance) -> AllocationDecision:
    window = Counter(inst.window)

    def rank(tx, c, part):
        recent = sum(window[n] for n in c) + sum(
            1 for t in part.delta.values() for n in t if n in c
        )
        return (recent / len(c), -len(c), c)

    return _template(inst, rank)


def template_defer(inst: AllocationInstance) -> AllocationDecision:
    return build_decision(inst, {}, tuple(sorted(t.id for t in inst.pending)))


TEMPLATES = (template_smallest_trusted, template_cheapest, template_spread, template_defer)


def reward(inst: AllocationInstance, d: AllocationDecision, penalty: float) -> float:
    ev = evaluate(inst, d)
    return ev.utility - penalty * len(ev.violations)


def random_instance(seed: int, n_exec: Optional[int] = None, n_tx: Optional[int] = None) -> AllocationInstance:
    """Seeded instance within the oracle limits (at most 6 executors, 5 transactions)."""
    rng = random.Random(f"alloc-instance|{seed}")
    n_exec = n_exec or rng.randint(2, 6)
    n_tx = n_tx if n_tx is not None else rng.randint(1, 5)
    executors = []
    loads = {}
    for i in range(n_exec):
        cap = ResourceVector(rng.uniform(4, 12), rng.uniform(4, 12), rng.uniform(4, 12))
        executors.append(
            NodeProfile(
                id=f"e{i}",
                speed=rng.choice([1.0, 2.0, 4.0]),
                capacity=cap,
                cost_rate=round(rng.uniform(0.05, 0.5), 3),
                trust=round(rng.uniform(0.3, 1.0), 3),
                privacy_capable=rng.random() < 0.5,
                role=NodeRole.execution(0),
            )
        )
        loads[f"e{i}"] = cap.scale(rng.uniform(0.0, 0.5))
    classes = [c for c in STATE_CLASSES]
    pending = []
    waits = {}
    for j in range(n_tx):
        c = rng.choice(classes)
        demand = ResourceVector(rng.uniform(0.5, 4), rng.uniform(0.5, 3), rng.uniform(0.2, 2))
        qos = QoSTargets(
            max_latency=rng.uniform(6, 20),
            max_cost=rng.choice([float("inf"), rng.uniform(1, 8)]),
            privacy=1 if rng.random() < 0.25 else 0,
        )
        pending.append(Transaction(j, "client", encode_cos(c), demand, qos, submit_time=0))
        waits[j] = float(rng.randint(0, 4))
    window = tuple(rng.choice([e.id for e in executors]) for _ in range(rng.randint(0, 20)))
    targets = {}
    if rng.random() < 0.5:
        targets[rng.choice(classes)] = 1
    params = AllocationParams(throughput_targets=targets)
    return AllocationInstance(
        pending=pending,
        executors=executors,
        loads=loads,
        control_capacity=ResourceVector(1.0, 1.0, 1.0),
        window=window,
        gamma_de=round(rng.uniform(0, 0.6), 3),
        queue_wait=waits,
        params=params,
    )


class AllocationEnv:
    """Episodes of consecutive allocation epochs.

    Each step draws fresh arrivals and executor loads; deferred transactions
    carry over (one tick older) and executor assignments feed the
    decentralization window, so actions have delayed consequences.
    """

    def __init__(self, seed: int = 42, horizon: int = 4, penalty: float = 5.0):
        self.seed = seed
        self.horizon = horizon
        self.penalty = penalty
        self._executors = random_instance(seed, n_exec=5, n_tx=0).executors

    def reset(self, episode: int) -> AllocationInstance:
        self.rng = random.Random(f"alloc-env|{self.seed}|{episode}")
        self.t = 0
        self.window: tuple = ()
        self.carry: list = []
        self.next_id = 0
        return self._draw()

    def _draw(self) -> AllocationInstance:
        rng = self.rng
        carried = [(tx, w + 1.0) for tx, w in self.carry]
        fresh = []
        for _ in range(rng.randint(0, 3)):
            c = rng.choice(STATE_CLASSES)
            demand = ResourceVector(rng.uniform(0.5, 3), rng.uniform(0.5, 2), rng.uniform(0.2, 1.5))
            qos = QoSTargets(max_latency=rng.uniform(7, 16), privacy=1 if rng.random() < 0.2 else 0)
            fresh.append((Transaction(self.next_id, "client", encode_cos(c), demand, qos, self.t), 0.0))
            self.next_id += 1
        items = (carried + fresh)[-5:]
        loads = {e.id: e.capacity.scale(rng.uniform(0.0, 0.7)) for e in self._executors}
        self.inst = AllocationInstance(
            pending=[tx for tx, _ in items],
            executors=self._executors,
            loads=loads,
            control_capacity=ResourceVector(1.0, 1.0, 1.0),
            window=self.window,
            gamma_de=0.5,
            queue_wait={tx.id: w for tx, w in items},
        )
        self.waits = dict((tx.id, w) for tx, w in items)
        return self.inst

    def step(self, decision: AllocationDecision) -> tuple[Optional[AllocationInstance], float, bool]:
        r = reward(self.inst, decision, self.penalty)
        assigned = tuple(n for t in sorted(decision.delta) for n in decision.delta[t])
        self.window = (self.window + assigned)[-WINDOW:]
        # stale work past its latency target is lost
        self.carry = [
            (self.inst.txs[t], self.waits[t])
            for t in decision.deferred
            if self.waits[t] + 1.0 < self.inst.txs[t].qos.max_latency
        ]
        self.t += 1
        if self.t >= self.horizon:
            return None, r, True
        return self._draw(), r, False


def _tie_break(seed: int, s: int, actions: Sequence[int]) -> int:
    h = hashlib.sha256(f"tie|{seed}|{s}".encode()).digest()
    return actions[int.from_bytes(h[:4], "big") % len(actions)]


@dataclass
class Policy:
    Q: dict
    seed: int
    n_actions: int = len(TEMPLATES)

    def action(self, s: int) -> int:
        vals = [self.Q.get((s, a), 0.0) for a in range(self.n_actions)]
        top = max(vals)
        best = [a for a, v in enumerate(vals) if v == top]
        return _tie_break(self.seed, s, best)

    def __call__(self, inst: AllocationInstance) -> AllocationDecision:
        return TEMPLATES[self.action(state_id(inst))](inst)


def train_policy(env: AllocationEnv, cfg: RLConfig) -> Policy:
    rng = random.Random(f"qlearn|{cfg.seed}")
    Q: dict = {}
    n = len(TEMPLATES)
    for ep in range(cfg.episodes):
        eps = cfg.epsilon(ep)
        inst = env.reset(ep)
        done = False
        while not done:
            s = state_id(inst)
            if rng.random() < eps:
                a = rng.randrange(n)
            else:
                a = Policy(Q, cfg.seed, n).action(s)
            nxt, r, done = env.step(TEMPLATES[a](inst))
            if done:
                old = Q.get((s, a), 0.0)
                Q[(s, a)] = old + cfg.alpha * (r - old)
            else:
                q_update(Q, s, a, r, state_id(nxt), cfg, n)
                inst = nxt
    return Policy(Q, cfg.seed, n)


def rollout(env: AllocationEnv, solver: Callable[[AllocationInstance], AllocationDecision], episodes: int, offset: int = 10**6) -> float:
    """Mean per-step reward of ``solver`` over evaluation episodes disjoint from training."""
    total, steps = 0.0, 0
    for ep in range(episodes):
        inst = env.reset(offset + ep)
        done = False
        while not done:
            inst_next, r, done = env.step(solver(inst))
            total += r
            steps += 1
            inst = inst_next
    return total / steps if steps else 0.0


def random_solver(seed: int) -> Callable[[AllocationInstance], AllocationDecision]:
    rng = random.Random(f"random-policy|{seed}")
    return lambda inst: TEMPLATES[rng.randrange(len(TEMPLATES))](inst)


def solve(inst: AllocationInstance, solver: str = "greedy", policy: Optional[Policy] = None) -> AllocationDecision:
    if solver == "greedy":
        return solve_greedy(inst)
    if solver == "exhaustive":
        return solve_exhaustive(inst)
    if solver == "qlearn":
        if policy is None:
            raise ValueError("qlearn solver needs a trained policy")
        return policy(inst)
    raise ValueError(f"unknown solver {solver!r}")
