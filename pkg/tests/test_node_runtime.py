import pytest
from hypothesis import given, settings, strategies as st

from vdlt.core_types import (
    BlockKind,
    CosClass,
    NodeProfile,
    NodeRole,
    QoSTargets,
    ResourceVector,
    Transaction,
    encode_cos,
)
from vdlt.node_runtime import (
    TOP,
    CommitteeUnhealthy,
    HealthRecord,
    HealthStatus,
    HealthTable,
    Hierarchy,
    Local,
    LocalGroup,
    NoCandidates,
    OverCapacity,
    StabilityFloor,
    Substrate,
    UnfitForControl,
    UnknownGroup,
    block_producer,
    execute,
    instantiate_virtual_dlt,
    joint_committee,
    route,
    update_health,
    virtualize,
)

HIER = Hierarchy(
    top=("t0", "t1", "t2", "t3"),
    groups={1: LocalGroup(("c1",), ("e1", "e2")), 2: LocalGroup(("c2",), ("e3",))},
)


def node(nid, role, speed=1.0, trust=0.9):
    return NodeProfile(nid, speed, ResourceVector(10, 10, 10), 1.0, trust, False, role)


def tx(compute=0.0, high=False, tid=1):
    return Transaction(tid, "alice", encode_cos(CosClass.BEST_EFFORT), ResourceVector(compute),
                       QoSTargets(100.0), 0, high_security=high)


def test_virtualize_slow_node_as_control_fails():
    slow = node("s", NodeRole.execution(1), speed=0.1)
    with pytest.raises(UnfitForControl):
        virtualize(slow, NodeRole.top_control(), HIER, StabilityFloor(1.0))


def test_virtualize_into_unknown_group():
    with pytest.raises(UnknownGroup):
        virtualize(node("x", NodeRole.execution(1)), NodeRole.execution(9), HIER)


def test_virtualize_keeps_identity():
    n = node("x", NodeRole.execution(1), speed=2.0)
    out = virtualize(n, NodeRole.local_control(2), HIER, StabilityFloor(1.0))
    assert out.role == NodeRole.local_control(2) and out.id == "x" and out.speed == 2.0


def test_floor_from_median_speed():
    execs = [node(f"e{i}", NodeRole.execution(1), speed=s) for i, s in enumerate([1, 3, 9])]
    assert StabilityFloor.from_executors(execs).min_speed == 3


def test_health_threshold_and_recovery():
    rec = HealthRecord("n")
    for t in range(1, 3):
        rec = update_health(rec, False, t)
        assert rec.status is HealthStatus.SUSPECT
    rec = update_health(rec, False, 3)
    assert rec.status is HealthStatus.DOWN and rec.last_heartbeat == 0
    rec = update_health(rec, True, 4)
    assert rec == HealthRecord("n", 4, HealthStatus.HEALTHY, 0)


def test_health_table_usable():
    table = HealthTable(["a", "b"], threshold=1)
    table.beat("a", False, 1)
    assert table.usable(["a", "b"]) == ["b"]


def test_route_local_and_top():
    assert route(tx(), HIER, ["e1", "e2"]) == Local(1)
    assert route(tx(), HIER, ["e1", "e3"]) is TOP
    with pytest.raises(NoCandidates):
        route(tx(), HIER, [])


def test_hierarchy_validation():
    HIER.validate()
    bad = Hierarchy(top=("t0",), groups={1: LocalGroup(("c1",), ("e1",)), 2: LocalGroup(("c2",), ("e1",))})
    with pytest.raises(ValueError):
        bad.validate()
    with pytest.raises(ValueError):
        Hierarchy(top=()).validate()


PROFILES = {
    "e1": node("e1", NodeRole.execution(1), speed=2.0),
    "e2": node("e2", NodeRole.execution(1), speed=0.5),
    "c1": node("c1", NodeRole.local_control(1)),
}


def test_joint_committee_for_high_security():
    assert joint_committee(tx(high=True), ["e1"], ["c1", "t0"]) == ("e1", "c1", "t0")
    assert joint_committee(tx(), ["e1"], ["c1"]) == ("e1",)


def test_execute_bounded_by_slowest_and_user_block():
    receipt, block = execute(tx(compute=3.0, high=True), ("e1", "e2", "c1"), PROFILES, now=10, height=4)
    assert receipt.ticks == 6  # 3 units at speed 0.5
    assert block.kind is BlockKind.USER and block.producer == "e1"
    assert block.height == 4 and block.payload == (1,)


def test_execute_refuses_down_or_controlonly_committees():
    health = HealthTable(["e1", "c1"], threshold=1)
    health.beat("e1", False, 1)
    with pytest.raises(CommitteeUnhealthy):
        execute(tx(), ("e1",), PROFILES, 0, health)
    with pytest.raises(CommitteeUnhealthy):
        execute(tx(), ("c1",), PROFILES, 0)


def test_block_producer_skips_control_leader():
    assert block_producer(("c1", "e2", "e1"), "c1", PROFILES) == "e2"
    assert block_producer(("e1", "c1"), "e1", PROFILES) == "e1"


def test_virtual_dlt_capacity_examples():
    cap = ResourceVector(10, 10, 10)
    a = instantiate_virtual_dlt(cap, [], ResourceVector(6, 6, 6), instance_id="a")
    with pytest.raises(OverCapacity):
        instantiate_virtual_dlt(cap, [a], ResourceVector(5, 5, 5))
    b = instantiate_virtual_dlt(cap, [a], ResourceVector(4, 4, 4), instance_id="b")
    assert b.reservation == ResourceVector(4, 4, 4)
    with pytest.raises(ValueError):
        instantiate_virtual_dlt(cap, [], ResourceVector(-1, 0, 0))


reqs = st.builds(ResourceVector, st.integers(0, 6), st.integers(0, 6), st.integers(0, 6))


@settings(max_examples=150)
@given(st.lists(st.tuples(st.booleans(), reqs), max_size=40))
def test_substrate_never_overcommits(ops):
    cap = ResourceVector(10, 10, 10)
    sub = Substrate(cap)
    for i, (admit, req) in enumerate(ops):
        if admit or not sub.instances:
            try:
                sub.admit(f"v{i}", req)
            except OverCapacity:
                assert not (sub.reserved() + req).fits_within(cap, eps=0.0)
        else:
            sub.release(sorted(sub.instances)[0])
        assert sub.reserved().fits_within(cap, eps=0.0)
