"""Oracle suite behind ``vdlt verify``, plus mutation hooks used to show it has teeth."""

from __future__ import annotations

import contextlib
import random
import statistics
from dataclasses import dataclass
from typing import Callable, Iterator, Optional

from .. import allocation, scheduler
from ..consensus import Mode, protocol
from ..consensus.harness import fault_free_messages, liveness_run, safety_run
from ..core_types import (
    CosClass,
    QoSTargets,
    ResourceVector,
    Transaction,
    encode_cos,
    parse_cos,
)
from ..economics import Economy, PenaltyEvidence, TokenSupply
from ..governance import InsufficientUnlocked, StakeLedger

COS_TABLE = {
    0b111: CosClass.FAST_CONFIRMATION,
    0b110: CosClass.COMPUTATION_INTENSIVE,
    0b101: CosClass.STORAGE_INTENSIVE,
    0b100: CosClass.LOW_COST,
    0b011: CosClass.MANAGEMENT_CONTROL,
    0b010: CosClass.PRIVATE,
    0b001: CosClass.BEST_EFFORT,
    0b000: CosClass.SCAVENGER,
}


@dataclass
class CheckResult:
    name: str
    ok: bool
    detail: str = ""


def expected_quorum(n: int) -> int:
    """Smallest integer strictly greater than 2n/3, found by counting up."""
    q = 0
    while 3 * q <= 2 * n:
        q += 1
    return q


def check_cos_roundtrip() -> CheckResult:
    bad = []
    for b in range(256):
        c = parse_cos(b)
        if c is not COS_TABLE[b >> 5] or encode_cos(c, b & 0x1F).raw != b:
            bad.append(b)
    return CheckResult("cos_roundtrip", not bad, f"{len(bad)} mismatching bytes")


def check_quorum_table() -> CheckResult:
    bad = [n for n in range(1, 101) if protocol.quorum_size(n) != expected_quorum(n)]
    return CheckResult("quorum_table", not bad, f"mismatch at n={bad[:5]}" if bad else "n=1..100")


def _saturating_tx(i: int, c: CosClass) -> Transaction:
    return Transaction(i, "client", encode_cos(c), ResourceVector(), QoSTargets(1.0), 0)


def cbwfq_saturated(weights: dict, services: int = 10_000, batch: int = 7) -> tuple[dict, list[str]]:
    """Serve ``services`` unit transactions from always-backlogged classes.

    Returns the observed service shares and any invariant breaches seen on
    the way (strict priority, scavenger isolation, work conservation).
    """
    classes = list(weights)
    cfg = scheduler.SchedulerConfig(weights=weights, capacities={c: 10**6 for c in CosClass})
    q = scheduler.ClassQueues(cfg)
    nid = 0
    for c in classes:
        for _ in range(batch * 2):
            q.enqueue(_saturating_tx(nid, c), c)
            nid += 1
    q.enqueue(_saturating_tx(nid, CosClass.SCAVENGER), CosClass.SCAVENGER)
    nid += 1
    served = {c: 0 for c in classes}
    breaches = []
    total = 0
    step = 0
    while total < services:
        if step % 97 == 0:
            q.enqueue(_saturating_tx(nid, CosClass.MANAGEMENT_CONTROL), CosClass.MANAGEMENT_CONTROL)
            nid += 1
        mc_waiting = q.occupancy(CosClass.MANAGEMENT_CONTROL)
        out = q.next_batch(batch)
        if mc_waiting and (not out or parse_cos(out[0].cos) is not CosClass.MANAGEMENT_CONTROL):
            breaches.append(f"step {step}: control traffic not served first")
        if any(parse_cos(t.cos) is CosClass.SCAVENGER for t in out):
            breaches.append(f"step {step}: scavenger served while others backlogged")
        if len(out) < batch:
            breaches.append(f"step {step}: budget idle with backlog")
        for tx in out:
            c = parse_cos(tx.cos)
            if c in served:
                served[c] += 1
                total += 1
                q.enqueue(_saturating_tx(nid, c), c)
                nid += 1
        step += 1
    shares = {c: served[c] / total for c in classes}
    return shares, breaches


def check_cbwfq() -> CheckResult:
    weights = {
        CosClass.FAST_CONFIRMATION: 4,
        CosClass.LOW_COST: 2,
        CosClass.BEST_EFFORT: 1,
    }
    shares, breaches = cbwfq_saturated(weights)
    total_w = sum(weights.values())
    off = {c.label: round(shares[c] - w / total_w, 4) for c, w in weights.items()}
    ok = not breaches and all(abs(v) <= 0.02 for v in off.values())
    detail = f"deviation {off}" + (f"; {breaches[0]}" if breaches else "")
    return CheckResult("cbwfq_fluid", ok, detail)


def check_pbft_safety(runs: int = 200, sizes=(4, 7, 10)) -> CheckResult:
    conflicts = {}
    for n in sizes:
        conflicts[n] = sum(safety_run(n, seed).conflicting for seed in range(runs))
    return CheckResult("pbft_safety", not any(conflicts.values()), f"conflicting runs {conflicts}")


def check_pbft_liveness(view_timeout: int = 50) -> CheckResult:
    bad = []
    for n in (4, 7, 10):
        f = (n - 1) // 3
        for mode in Mode:
            res = liveness_run(n, mode, view_timeout)
            if res.latency is None or res.latency > (f + 1) * view_timeout:
                bad.append((n, mode.value, res.latency))
    return CheckResult("pbft_liveness", not bad, f"late or missing commits {bad}" if bad else "ok")


def check_message_complexity() -> CheckResult:
    sizes = (4, 8, 16, 32)
    classical = [fault_free_messages(n, Mode.CLASSICAL) for n in sizes]
    multisig = [fault_free_messages(n, Mode.MULTISIG) for n in sizes]
    ratios = [m / c for m, c in zip(multisig, classical)]
    ok = (
        all(c >= n * (n - 1) for n, c in zip(sizes, classical))
        and all(m <= 8 * n for n, m in zip(sizes, multisig))
        and all(a > b for a, b in zip(ratios, ratios[1:]))
    )
    return CheckResult("message_complexity", ok, f"classical {classical}, multisig {multisig}")


def allocation_oracle(instances: int = 100) -> dict:
    ratios, infeasible, dominated = [], [], []
    for seed in range(instances):
        inst = allocation.random_instance(seed)
        g = allocation.evaluate(inst, allocation.solve_greedy(inst))
        e = allocation.evaluate(inst, allocation.solve_exhaustive(inst))
        if not g.feasible:
            infeasible.append(seed)
        if e.utility < g.utility - 1e-9:
            dominated.append(seed)
        ratios.append(g.utility / e.utility if e.utility > 0 else 1.0)
    return {
        "median_ratio": statistics.median(ratios),
        "min_ratio": min(ratios),
        "greedy_infeasible": infeasible,
        "oracle_beaten": dominated,
    }


def check_allocation() -> CheckResult:
    r = allocation_oracle()
    ok = not r["greedy_infeasible"] and not r["oracle_beaten"] and r["median_ratio"] > 0.9
    return CheckResult("allocation_oracle", ok, f"median greedy/exhaustive {r['median_ratio']:.4f}, "
                       f"infeasible {r['greedy_infeasible']}, oracle beaten {r['oracle_beaten']}")


def qv_conservation(ops: int = 100_000, seed: int = 0) -> bool:
    rng = random.Random(seed)
    holders = [f"h{i}" for i in range(8)]
    ledger = StakeLedger({h: 1000 for h in holders})
    supply = ledger.total()
    now = 0
    for _ in range(ops):
        if rng.random() < 0.6:
            h = rng.choice(holders)
            try:
                ledger.cast_vote(h, "cand", rng.randint(1, 200), rng.randint(1, 4), now)
            except InsufficientUnlocked:
                pass
        else:
            now += rng.randint(0, 3)
            ledger.expire_locks(now)
        if ledger.total() != supply or any(v < 0 for v in ledger.balances.values()):
            return False
    return True


def economics_audit(epochs: int = 100, epochs_per_year: int = 12) -> tuple[bool, bool]:
    """(conserved after every epoch, supply under the annualized cap after every epoch)."""
    supply = TokenSupply(epochs_per_year=epochs_per_year)
    balances = {"treasury": supply.genesis - 30_000, "a": 10_000, "b": 10_000, "c": 10_000}
    econ = Economy(StakeLedger(balances), supply)
    econ.post_collateral("a", 5_000)
    conserved, capped = True, True
    for e in range(epochs):
        minted = econ.mint()
        econ.pay_rewards(minted, [("a", 1.0), ("b", 0.5), ("c", 0.0)])
        if e == 10:
            econ.log.record("a", "equivocation", "d0")
            econ.slash(PenaltyEvidence("a", "d0", "b"), 0.5)
        conserved &= econ.conserved()
        capped &= supply.total <= supply.cap_at(e + 1)
    return conserved, capped


def check_conservation() -> CheckResult:
    conserved, capped = economics_audit()
    qv = qv_conservation(20_000)
    return CheckResult("conservation", conserved and capped and qv,
                       f"economy conserved={conserved} capped={capped}, qv={qv}")


def check_bundled_scenarios() -> CheckResult:
    from .scenario import bundled_scenarios, load_scenario
    from .simulation import run

    bad = []
    for path in bundled_scenarios():
        inv = run(load_scenario(path)).summary["invariants"]
        if inv["user_blocks_by_control"] or inv["conservation_failures"] or not inv["accounting_balanced"]:
            bad.append(path.name)
    return CheckResult("scenario_invariants", not bad, f"failing {bad}" if bad else "all bundled scenarios")


CHECKS: dict[str, Callable[[], CheckResult]] = {
    "cos_roundtrip": check_cos_roundtrip,
    "quorum_table": check_quorum_table,
    "cbwfq_fluid": check_cbwfq,
    "pbft_safety": check_pbft_safety,
    "pbft_liveness": check_pbft_liveness,
    "message_complexity": check_message_complexity,
    "allocation_oracle": check_allocation,
    "conservation": check_conservation,
    "scenario_invariants": check_bundled_scenarios,
}


@contextlib.contextmanager
def mutation(name: Optional[str]) -> Iterator[None]:
    """Temporarily break one mechanism so the suite can be seen to catch it."""
    if name is None:
        yield
        return
    if name == "quorum-off-by-one":
        orig = protocol.quorum_size
        protocol.quorum_size = lambda n: (2 * n) // 3
        try:
            yield
        finally:
            protocol.quorum_size = orig
    elif name == "ignore-weights":
        orig = scheduler.ClassQueues._weight
        scheduler.ClassQueues._weight = lambda self, c: 1
        try:
            yield
        finally:
            scheduler.ClassQueues._weight = orig
    else:
        raise ValueError(f"unknown mutation {name!r}")


MUTATIONS = ("quorum-off-by-one", "ignore-weights")


def verify(only: Optional[list] = None, mutate: Optional[str] = None) -> list[CheckResult]:
    names = only or list(CHECKS)
    unknown = [n for n in names if n not in CHECKS]
    if unknown:
        raise ValueError(f"unknown checks {unknown}")
    out = []
    with mutation(mutate):
        for name in names:
            try:
                out.append(CHECKS[name]())
            except Exception as e:  # a crash is a failed check, not a crashed suite
                out.append(CheckResult(name, False, f"{type(e).__name__}: {e}"))
    return out
