"""Acceptance criteria, one test each, at full size.

Each test prints a single ``PASS``/``FAIL`` line with the measured numbers
before asserting, so ``pytest -v -s tests/test_acceptance.py`` (or the
captured-output section on failure) shows the whole table.
"""

import time

import pytest

from vdlt.allocation import (
    AllocationEnv,
    RLConfig,
    random_solver,
    rollout,
    solve_greedy,
    train_policy,
)
from vdlt.cli_harness.cli import write_outputs
from vdlt.cli_harness.scenario import bundled_dir, bundled_scenarios, load_scenario
from vdlt.cli_harness.simulation import run
from vdlt.cli_harness.verify import (
    COS_TABLE,
    allocation_oracle,
    cbwfq_saturated,
    economics_audit,
    expected_quorum,
    qv_conservation,
)
from vdlt.consensus import Mode, quorum_size
from vdlt.consensus.harness import fault_free_messages, liveness_run, safety_run
from vdlt.core_types import CosClass, encode_cos, parse_cos
from vdlt.governance import StakeLedger, qv_cost


@pytest.fixture
def report(capsys):
    started = time.perf_counter()

    def _report(num, name, ok, detail, budget):
        elapsed = time.perf_counter() - started
        ok = ok and elapsed < budget
        with capsys.disabled():
            print(f"\n{'PASS' if ok else 'FAIL'}  [{num:>2}] {name}: {detail} ({elapsed:.2f}s / {budget}s)")
        return ok

    return _report


def test_01_cos_roundtrip(report):
    bad = [b for b in range(256)
           if parse_cos(b) is not COS_TABLE[b >> 5] or encode_cos(parse_cos(b), b & 0x1F).raw != b]
    assert report(1, "CoS round-trip", not bad, f"{256 - len(bad)}/256 bytes", 1)


def test_02_cbwfq_proportionality(report):
    weights = {CosClass.FAST_CONFIRMATION: 4, CosClass.LOW_COST: 2, CosClass.BEST_EFFORT: 1}
    shares, breaches = cbwfq_saturated(weights, services=10_000)
    dev = {c.label: round(shares[c] - w / 7, 4) for c, w in weights.items()}
    ok = not breaches and all(abs(v) <= 0.02 for v in dev.values())
    assert report(2, "CBWFQ proportionality", ok, f"deviation {dev}, {len(breaches)} invariant breaches", 5)


def test_03_quorum_arithmetic(report):
    bad = [n for n in range(1, 101) if quorum_size(n) != expected_quorum(n)]
    assert report(3, "Quorum arithmetic", not bad, f"mismatches {bad}", 1)


def test_04_pbft_safety(report):
    conflicts, incomplete = {}, {}
    for n in (4, 7, 10):
        runs = [safety_run(n, seed) for seed in range(1000)]
        conflicts[n] = sum(r.conflicting for r in runs)
        incomplete[n] = sum(not r.honest_commits for r in runs)
    ok = not any(conflicts.values())
    assert report(4, "PBFT safety", ok,
                  f"conflicting runs {conflicts} (runs with no honest commit {incomplete})", 120)


def test_05_pbft_liveness(report):
    worst = {}
    ok = True
    for n in (4, 7, 10):
        f = (n - 1) // 3
        for mode in Mode:
            res = liveness_run(n, mode, view_timeout=50)
            worst[(n, mode.value)] = res.latency
            ok &= res.latency is not None and res.latency <= (f + 1) * 50
    assert report(5, "PBFT liveness", ok, f"commit latency {worst}", 60)


def test_06_message_complexity(report):
    sizes = (4, 8, 16, 32)
    classical = [fault_free_messages(n, Mode.CLASSICAL) for n in sizes]
    multisig = [fault_free_messages(n, Mode.MULTISIG) for n in sizes]
    ratios = [m / c for m, c in zip(multisig, classical)]
    ok = (all(c >= n * (n - 1) for n, c in zip(sizes, classical))
          and all(m <= 8 * n for n, m in zip(sizes, multisig))
          and all(a > b for a, b in zip(ratios, ratios[1:])))
    assert report(6, "Message complexity", ok,
                  f"classical {classical}, multisig {multisig}, ratios {[round(r, 3) for r in ratios]}", 60)


def test_07_qv_token_lock(report):
    ledger = StakeLedger({"h": 10})
    ballot = ledger.cast_vote("h", "cand", 4, 2, now=0)
    lock_ok = ballot.votes == 8 and ledger.locks[0].expiry == 4
    marginal_ok = all(qv_cost(v + 1) - qv_cost(v) == 2 * v + 1 for v in range(10_000))
    conserved = qv_conservation(100_000)
    ok = lock_ok and marginal_ok and conserved
    assert report(7, "QV token lock", ok,
                  f"votes {ballot.votes}, lock {ledger.locks[0].expiry}, marginal ok {marginal_ok}, "
                  f"conserved over 1e5 ops {conserved}", 10)


def test_08_allocation_oracle(report):
    r = allocation_oracle(100)
    ok = not r["greedy_infeasible"] and not r["oracle_beaten"] and r["median_ratio"] > 0.9
    assert report(8, "Allocation oracle", ok,
                  f"median greedy/exhaustive {r['median_ratio']:.4f} (min {r['min_ratio']:.4f}), "
                  f"greedy infeasible {r['greedy_infeasible']}, exhaustive below greedy {r['oracle_beaten']}",
                  120)


def test_09_q_learning(report):
    cfg = RLConfig(seed=42, episodes=5000)
    first = train_policy(AllocationEnv(seed=cfg.seed, penalty=cfg.penalty), cfg)
    second = train_policy(AllocationEnv(seed=cfg.seed, penalty=cfg.penalty), cfg)
    reproducible = first.Q == second.Q
    episodes = 500
    learned = rollout(AllocationEnv(seed=cfg.seed, penalty=cfg.penalty), first, episodes)
    rand = rollout(AllocationEnv(seed=cfg.seed, penalty=cfg.penalty), random_solver(cfg.seed), episodes)
    greedy = rollout(AllocationEnv(seed=cfg.seed, penalty=cfg.penalty), solve_greedy, episodes)
    bar = rand + 0.1 * (greedy - rand)
    ok = reproducible and learned >= bar
    assert report(9, "Q-learning", ok,
                  f"learned {learned:.3f} vs bar {bar:.3f} (random {rand:.3f}, greedy {greedy:.3f}), "
                  f"bit-reproducible {reproducible}", 120)


@pytest.fixture(scope="module")
def bundled_runs():
    return {p.name: run(load_scenario(p)) for p in bundled_scenarios()}


def test_10_decoupling(report, bundled_runs):
    counts = {name: r.summary["invariants"]["user_blocks_by_control"] for name, r in bundled_runs.items()}
    users = {name: r.summary["blocks"]["user"] for name, r in bundled_runs.items()}
    ok = len(counts) >= 3 and not any(counts.values()) and all(users.values())
    assert report(10, "Decoupling invariant", ok,
                  f"control-produced user blocks {counts}, user blocks {users}", 60)


def test_11_economics_conservation(report):
    conserved, capped = economics_audit(epochs=100)
    assert report(11, "Economics conservation", conserved and capped,
                  f"conserved every epoch {conserved}, within 4% annualized cap {capped}", 10)


def test_12_qos_separation(report):
    s = run(load_scenario(bundled_dir() / "congestion.json")).summary
    fc = s["classes"]["fast_confirmation"]["mean_latency"]
    be = s["classes"]["best_effort"]["mean_latency"]
    leaked = s["invariants"]["scavenger_served_while_backlogged"]
    ok = fc is not None and be is not None and fc < be and leaked == 0
    assert report(12, "QoS separation", ok,
                  f"mean latency FC {fc} < BE {be}; scavenger served while backlogged {leaked}", 30)


def test_13_determinism(report, tmp_path):
    same = {}
    for p in bundled_scenarios():
        outs = []
        for k in range(2):
            res = run(load_scenario(p))
            summary_path, metrics_path = write_outputs(res, tmp_path / f"{p.stem}-{k}")
            outs.append((res.digest, summary_path.read_bytes(), metrics_path.read_bytes()))
        same[p.name] = outs[0] == outs[1]
    assert report(13, "Determinism", all(same.values()), f"identical digests and bytes {same}", 30)
