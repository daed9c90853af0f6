import pytest

from vdlt.netsim import (
    Behavior,
    Fabric,
    FaultEntry,
    FaultPlan,
    LatencyModel,
    OverlappingWindows,
    UnknownNode,
    node_stream,
)


def test_fixed_latency_delivery():
    fab = Fabric(["a", "b"], latency=LatencyModel(base=2), now=10)
    ev = fab.send("hi", "a", "b", 10)
    assert ev.deliver_at == 12
    assert [e.payload for e in fab.run_until(12)] == ["hi"]


def test_drop_rate_one_drops_everything():
    fab = Fabric(["a", "b"]).inject(FaultPlan((FaultEntry("a", 0, 100, Behavior.DROP_RATE, 1.0),)))
    assert fab.send("x", "a", "b", 0) is None
    assert fab.dropped == 1 and fab.pending() == 0


def test_unknown_destination():
    with pytest.raises(UnknownNode):
        Fabric(["a"]).send("x", "a", "zz", 0)


def test_same_tick_in_seq_order():
    fab = Fabric(["a", "b", "c"])
    fab.send("first", "a", "c", 4)
    fab.send("second", "b", "c", 4)
    assert [e.payload for e in fab.run_until(5)] == ["first", "second"]


def test_empty_run_advances_clock():
    fab = Fabric(["a"])
    assert fab.run_until(9) == []
    assert fab.now == 9


def trace(seed):
    fab = Fabric(["a", "b", "c"], seed=seed, latency=LatencyModel(1, "exponential", mean=3.0))
    for t in range(50):
        fab.send(t, "abc"[t % 3], "abc"[(t + 1) % 3], t)
        fab.run_until(t)
    fab.run_until(1000)
    return fab.trace_digest()


def test_trace_digest_is_reproducible():
    assert trace(1) == trace(1)
    assert trace(1) != trace(2)


def test_overlapping_windows_rejected():
    plan = FaultPlan((FaultEntry("a", 0, 10, Behavior.CRASH), FaultEntry("a", 5, 15, Behavior.CRASH)))
    with pytest.raises(OverlappingWindows):
        Fabric(["a"]).inject(plan)


def test_crashed_node_receives_nothing():
    fab = Fabric(["a", "b"]).inject(FaultPlan((FaultEntry("b", 0, 100, Behavior.CRASH),)))
    fab.send("x", "a", "b", 0)
    assert fab.run_until(10) == []


def test_silenced_node_still_receives():
    fab = Fabric(["a", "b"]).inject(FaultPlan((FaultEntry("b", 0, 100, Behavior.SILENCE),)))
    assert fab.send("x", "b", "a", 0) is None
    fab.send("y", "a", "b", 0)
    assert [e.payload for e in fab.run_until(10)] == ["y"]


def test_no_delivery_before_send_plus_base():
    fab = Fabric(["a", "b"], seed=3, latency=LatencyModel(2, "uniform", 0, 5))
    for t in range(100):
        ev = fab.send(t, "a", "b", t)
        assert ev.deliver_at >= t + 2
        fab.run_until(t)


def test_adding_a_node_does_not_perturb_streams():
    def delays(extra):
        fab = Fabric(["a", "z"], seed=9, latency=LatencyModel(1, "uniform", 0, 1000))
        if extra:
            fab.add_node("b")
        return [fab.send(i, "a", "z", 0).deliver_at for i in range(5)]

    assert delays(False) == delays(True)
    rng = node_stream(9, "a")
    assert rng.random() == node_stream(9, "a").random()
