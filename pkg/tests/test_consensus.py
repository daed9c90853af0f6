import pytest
from hypothesis import given, strategies as st

from vdlt.consensus import (
    ConsensusConfig,
    InsufficientShares,
    MismatchedDigest,
    Mode,
    QuorumCert,
    Share,
    SimulatedScheme,
    aggregate,
    leader_for,
    max_faults,
    quorum_size,
    verify_qc,
    vote_message,
)
from vdlt.consensus.harness import (
    committee_ids,
    fault_free_messages,
    liveness_run,
    run_consensus,
    safety_run,
)
from vdlt.netsim import Behavior, FaultEntry, FaultPlan, LatencyModel

DIGEST = b"\x11" * 32


def signed_shares(scheme, nodes, digest=DIGEST, phase="commit", view=0, height=1):
    msg = vote_message(phase, view, height, digest)
    return [Share(n, digest, scheme.sign(scheme.keygen(n), msg)) for n in nodes]


@pytest.mark.parametrize("n, q", [(4, 3), (7, 5), (10, 7), (1, 1), (3, 3)])
def test_quorum_examples(n, q):
    assert quorum_size(n) == q


@given(st.integers(1, 500))
def test_quorum_strictly_over_two_thirds(n):
    q = quorum_size(n)
    assert 3 * q > 2 * n and 3 * (q - 1) <= 2 * n
    # two quorums always share an honest member when at most f are faulty
    assert 2 * q - n > max_faults(n)


@pytest.mark.parametrize("view, leader", [(0, "A"), (5, "B"), (4, "A")])
def test_leader_rotation(view, leader):
    assert leader_for(view, ConsensusConfig(("A", "B", "C", "D"))) == leader


def test_aggregate_three_of_four():
    cfg = ConsensusConfig(("A", "B", "C", "D"))
    scheme = SimulatedScheme()
    qc = aggregate(signed_shares(scheme, "ABC"), DIGEST, cfg, scheme)
    assert qc.bitmap_str == "1110"
    assert verify_qc(qc, scheme, cfg)


def test_aggregate_errors():
    cfg = ConsensusConfig(("A", "B", "C", "D"))
    scheme = SimulatedScheme()
    with pytest.raises(InsufficientShares):
        aggregate(signed_shares(scheme, "AB"), DIGEST, cfg, scheme)
    mixed = signed_shares(scheme, "AB") + signed_shares(scheme, "C", digest=b"\x22" * 32)
    with pytest.raises(MismatchedDigest):
        aggregate(mixed, DIGEST, cfg, scheme)


def test_flipped_bitmap_bit_fails_verification():
    cfg = ConsensusConfig(("A", "B", "C", "D"))
    scheme = SimulatedScheme()
    qc = aggregate(signed_shares(scheme, "ABC"), DIGEST, cfg, scheme)
    for i in range(4):
        bits = list(qc.bitmap)
        bits[i] = not bits[i]
        forged = QuorumCert(qc.phase, qc.view, qc.height, qc.digest, tuple(bits), qc.agg_sig)
        assert not verify_qc(forged, scheme, cfg)


def test_exactly_two_thirds_is_not_a_quorum():
    cfg = ConsensusConfig(("A", "B", "C"))
    scheme = SimulatedScheme()
    shares = signed_shares(scheme, "AB")
    sig = scheme.aggregate([s.signature for s in shares])
    qc = QuorumCert("commit", 0, 1, DIGEST, (True, True, False), sig)
    assert not verify_qc(qc, scheme, cfg)


@pytest.mark.parametrize("mode", list(Mode))
def test_fault_free_agreement(mode):
    scheme = SimulatedScheme()
    res = run_consensus(committee_ids(4), DIGEST, mode, scheme=scheme)
    assert res.complete and not res.conflicting
    assert set(res.committed.values()) == {DIGEST}
    assert verify_qc(res.commit_qc, scheme, ConsensusConfig(committee_ids(4), mode))
    # a scheme that never saw these keys cannot vouch for the certificate
    assert not verify_qc(res.commit_qc, SimulatedScheme(1), ConsensusConfig(committee_ids(4), mode))


def test_single_node_self_commits():
    res = run_consensus(["solo"], DIGEST)
    assert res.committed == {"solo": DIGEST}
    assert res.latency == 0


@pytest.mark.parametrize("mode", list(Mode))
def test_silent_leader_triggers_view_change(mode):
    plan = FaultPlan((FaultEntry("r0", 0, 10_000, Behavior.SILENCE),))
    res = run_consensus(committee_ids(4), DIGEST, mode, view_timeout=30, plan=plan)
    assert res.max_view >= 1
    assert {d for n, d in res.committed.items() if n != "r0"} == {DIGEST}
    assert res.latency <= 2 * 30


# frozen message counts of one fault-free instance
CLASSICAL_COUNTS = {4: 27, 8: 119, 16: 495, 32: 2015}
MULTISIG_COUNTS = {4: 15, 8: 35, 16: 75, 32: 155}


@pytest.mark.parametrize("n", sorted(CLASSICAL_COUNTS))
def test_message_counts(n):
    assert fault_free_messages(n, Mode.CLASSICAL) == CLASSICAL_COUNTS[n]
    assert fault_free_messages(n, Mode.MULTISIG) == MULTISIG_COUNTS[n]
    assert CLASSICAL_COUNTS[n] == (n - 1) + 2 * n * (n - 1)
    assert MULTISIG_COUNTS[n] == 5 * (n - 1)


def test_equivocating_leader_is_caught_and_safe():
    for seed in range(20):
        plan = FaultPlan((FaultEntry("r0", 0, 10_000, Behavior.EQUIVOCATE),))
        res = run_consensus(committee_ids(4), DIGEST, Mode.CLASSICAL, view_timeout=30,
                            plan=plan, seed=seed,
                            latency=LatencyModel(1, "uniform", 0, 3))
        assert not res.conflicting
        assert any(ev.offender == "r0" for ev in res.evidence)


def test_corrupt_signatures_are_rejected():
    plan = FaultPlan((FaultEntry("r1", 0, 10_000, Behavior.CORRUPT_SIG),))
    res = run_consensus(committee_ids(4), DIGEST, Mode.MULTISIG, plan=plan)
    assert res.invalid > 0
    assert res.honest_commits and set(res.honest_commits.values()) == {DIGEST}


@pytest.mark.parametrize("n", [4, 7])
def test_safety_sample(n):
    for seed in range(60):
        assert not safety_run(n, seed).conflicting


@pytest.mark.parametrize("n", [4, 7, 10])
def test_liveness_with_f_crashes(n):
    f = (n - 1) // 3
    for mode in Mode:
        res = liveness_run(n, mode, view_timeout=50)
        assert res.latency is not None and res.latency <= (f + 1) * 50


def test_qc_soundness_over_traces():
    """Every valid commit certificate only names nodes that signed its digest."""
    for seed in range(40):
        res = safety_run(4, seed, mode=Mode.MULTISIG)
        qc = res.commit_qc
        if qc is None:
            continue
        cfg = ConsensusConfig(committee_ids(4), Mode.MULTISIG)
        scheme = SimulatedScheme(seed)
        for n in cfg.committee:
            scheme.keygen(n)
        assert verify_qc(qc, scheme, cfg)
        msg = vote_message(qc.phase, qc.view, qc.height, qc.digest)
        shares = [scheme.sign(scheme.keygen(n), msg) for n in qc.signers(cfg)]
        assert scheme.aggregate(shares) == qc.agg_sig


def test_runs_are_deterministic():
    a, b = safety_run(7, 5), safety_run(7, 5)
    assert a.committed == b.committed and a.messages == b.messages
