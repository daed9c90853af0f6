import pytest
from hypothesis import given, settings, strategies as st

from vdlt.core_types import CosClass, QoSTargets, ResourceVector, Transaction, encode_cos
from vdlt.scheduler import (
    WFQ_CLASSES,
    ClassQueues,
    Dropped,
    SchedulerConfig,
    classify,
    fluid_shares,
)


def tx(i, c=CosClass.BEST_EFFORT, size=1):
    return Transaction(i, "n", encode_cos(c), ResourceVector(), QoSTargets(1.0), 0, payload_size=size)


def test_classify_examples():
    cfg = SchedulerConfig(trust_threshold=0.5)
    fc = tx(1, CosClass.FAST_CONFIRMATION)
    assert classify(fc, 0.9, cfg) is CosClass.FAST_CONFIRMATION
    assert classify(fc, 0.2, cfg) is CosClass.BEST_EFFORT
    mc = tx(2, CosClass.MANAGEMENT_CONTROL)
    assert classify(mc, 0.9, cfg) is CosClass.SCAVENGER
    assert classify(mc, 0.9, cfg, submitter_is_control=True) is CosClass.MANAGEMENT_CONTROL


def test_low_trust_scavenger_is_not_promoted():
    cfg = SchedulerConfig()
    assert classify(tx(1, CosClass.SCAVENGER), 0.1, cfg) is CosClass.SCAVENGER


def test_enqueue_fifo_and_tail_drop():
    q = ClassQueues(SchedulerConfig(capacities={CosClass.BEST_EFFORT: 2}))
    q.enqueue(tx(1), CosClass.BEST_EFFORT)
    assert q.occupancy(CosClass.BEST_EFFORT) == 1
    q.enqueue(tx(2), CosClass.BEST_EFFORT)
    with pytest.raises(Dropped) as e:
        q.enqueue(tx(3), CosClass.BEST_EFFORT)
    assert e.value.reason == "full"
    assert q.drops[CosClass.BEST_EFFORT] == 1
    assert [t.id for t in q.next_batch(5)] == [1, 2]


def test_work_conserving_single_class():
    q = ClassQueues(SchedulerConfig())
    for i in range(5):
        q.enqueue(tx(i), CosClass.BEST_EFFORT)
    assert len(q.next_batch(5)) == 5


def test_empty_batch():
    assert ClassQueues(SchedulerConfig()).next_batch(3) == []


def test_control_strict_priority():
    q = ClassQueues(SchedulerConfig())
    q.enqueue(tx(1, CosClass.FAST_CONFIRMATION), CosClass.FAST_CONFIRMATION)
    q.enqueue(tx(2, CosClass.MANAGEMENT_CONTROL), CosClass.MANAGEMENT_CONTROL)
    out = q.next_batch(1)
    assert [t.id for t in out] == [2]


def test_scavenger_only_when_others_empty():
    q = ClassQueues(SchedulerConfig())
    q.enqueue(tx(1, CosClass.SCAVENGER), CosClass.SCAVENGER)
    q.enqueue(tx(2), CosClass.BEST_EFFORT)
    assert [t.id for t in q.next_batch(1)] == [2]
    assert [t.id for t in q.next_batch(1)] == [1]


def test_oversized_head_is_skipped_for_the_batch():
    q = ClassQueues(SchedulerConfig())
    q.enqueue(tx(1, CosClass.FAST_CONFIRMATION, size=5), CosClass.FAST_CONFIRMATION)
    q.enqueue(tx(2, CosClass.BEST_EFFORT, size=1), CosClass.BEST_EFFORT)
    assert [t.id for t in q.next_batch(2)] == [2]
    assert [t.id for t in q.next_batch(5)] == [1]


def test_weighted_shares_over_700_units():
    weights = {CosClass.FAST_CONFIRMATION: 4, CosClass.LOW_COST: 2, CosClass.BEST_EFFORT: 1}
    q = ClassQueues(SchedulerConfig(weights=weights, capacities={c: 10_000 for c in CosClass}))
    for i, c in enumerate(list(weights) * 700):
        q.enqueue(tx(i, c), c)
    served = {c: 0 for c in weights}
    for _ in range(100):
        for t in q.next_batch(7):
            served[t.requested_class] += 1
    for c, expected in fluid_shares(weights, 700).items():
        assert abs(served[c] - expected) <= 0.02 * expected


def test_config_rejects_bad_weight():
    with pytest.raises(ValueError):
        SchedulerConfig(weights={CosClass.BEST_EFFORT: 0})


classes = st.sampled_from(list(CosClass))


@settings(max_examples=200)
@given(st.lists(st.tuples(classes, st.integers(1, 3)), max_size=60), st.integers(1, 8))
def test_batch_invariants(arrivals, budget):
    q = ClassQueues(SchedulerConfig())
    for i, (c, size) in enumerate(arrivals):
        q.enqueue(tx(i, c, size), c)
    while not q.is_empty():
        before = {c: list(q.queues[c]) for c in CosClass}
        out = q.next_batch(budget)
        used = sum(q.size_of(t) for t in out)
        assert used <= budget
        # FIFO within a class
        for c in CosClass:
            got = [t for t in out if t.requested_class is c]
            assert got == before[c][: len(got)]
        # control first, scavenger last and only when the rest drained
        mc = [t.requested_class is CosClass.MANAGEMENT_CONTROL for t in out]
        assert mc == sorted(mc, reverse=True)
        if any(t.requested_class is CosClass.SCAVENGER for t in out):
            assert not any(q.queues[c] for c in WFQ_CLASSES)
            assert not q.queues[CosClass.MANAGEMENT_CONTROL]
        # work conservation: every waiting head was too big for what was left
        left = budget - used
        heads = [q.queues[c][0] for c in CosClass if q.queues[c]]
        for h in heads:
            if h.requested_class is not CosClass.SCAVENGER:
                assert q.size_of(h) > left
        if not out:
            # stalled: nothing but oversized heads, or a scavenger held behind them
            assert all(q.size_of(h) > budget for h in heads if h.requested_class is not CosClass.SCAVENGER)
            break
