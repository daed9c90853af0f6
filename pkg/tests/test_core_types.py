import pytest
from hypothesis import given, strategies as st

from vdlt.core_types import (
    Block,
    BlockKind,
    CosByte,
    CosClass,
    NodeRole,
    ProducerRoleError,
    QoSTargets,
    ResourceVector,
    Transaction,
    check_block_producer,
    encode_cos,
    parse_cos,
    validate_transaction,
)


def make_tx(**kw):
    base = dict(
        id=1,
        submitter="alice",
        cos=encode_cos(CosClass.FAST_CONFIRMATION),
        demand=ResourceVector(1, 1, 1),
        qos=QoSTargets(max_latency=10),
        submit_time=0,
    )
    base.update(kw)
    return Transaction(**base)


@pytest.mark.parametrize(
    "raw, cls",
    [
        (0b1110_0000, CosClass.FAST_CONFIRMATION),
        (0b0000_0000, CosClass.SCAVENGER),
        (0b0111_0101, CosClass.MANAGEMENT_CONTROL),
    ],
)
def test_parse_cos_examples(raw, cls):
    assert parse_cos(CosByte(raw)) is cls
    assert parse_cos(raw) is cls


@pytest.mark.parametrize(
    "cls, raw",
    [
        (CosClass.LOW_COST, 0b1000_0000),
        (CosClass.BEST_EFFORT, 0b0010_0000),
        (CosClass.SCAVENGER, 0b0000_0000),
    ],
)
def test_encode_cos_examples(cls, raw):
    assert encode_cos(cls).raw == raw


@given(st.integers(0, 255))
def test_reserved_bits_ride_along(raw):
    b = CosByte(raw)
    assert encode_cos(b.cos_class, b.reserved).raw == raw
    assert parse_cos(CosByte(raw & 0xE0)) is b.cos_class


@pytest.mark.parametrize("bad", [-1, 256, 1.5])
def test_cos_byte_range(bad):
    with pytest.raises(ValueError):
        CosByte(bad)


def test_label_roundtrip():
    for c in CosClass:
        assert CosClass.from_label(c.label) is c
    with pytest.raises(ValueError):
        CosClass.from_label("gold")


def test_validate_well_formed():
    assert validate_transaction(make_tx(), {"alice"}) == []


def test_validate_negative_demand():
    assert "negative demand" in validate_transaction(make_tx(demand=ResourceVector(-1, 0, 0)))


def test_validate_zero_latency_target():
    assert "non-positive latency target" in validate_transaction(make_tx(qos=QoSTargets(0)))


def test_validate_unknown_submitter():
    assert validate_transaction(make_tx(), {"bob"}) == ["unknown submitter"]


def test_resource_vector_arithmetic():
    a, b = ResourceVector(1, 2, 3), ResourceVector(1, 1, 1)
    assert (a - b).as_tuple() == (0, 1, 2)
    assert (a + b).l1() == 9
    assert b.fits_within(a)
    assert not a.fits_within(b)
    assert ResourceVector.from_obj({"compute": 2}).as_tuple() == (2.0, 0.0, 0.0)


def test_user_block_needs_execution_producer():
    blk = Block(BlockKind.USER, 1, "c0")
    with pytest.raises(ProducerRoleError):
        check_block_producer(blk, NodeRole.top_control())
    check_block_producer(blk, NodeRole.execution(0))
    check_block_producer(Block(BlockKind.CONTROL, 1, "c0"), NodeRole.top_control())
