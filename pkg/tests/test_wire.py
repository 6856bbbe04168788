import random

import pytest
from hypothesis import given, strategies as st

from securetime import wire

u32 = st.integers(min_value=0, max_value=2**32 - 1)
u64 = st.integers(min_value=0, max_value=2**64 - 1)
kid = st.binary(min_size=8, max_size=8)
sig = st.binary(min_size=64, max_size=64)

blocks = st.lists(
    st.builds(wire.TransparentClockBlock, st.binary(min_size=8, max_size=8), u64, sig), max_size=3
).map(tuple)

messages = st.one_of(
    st.builds(wire.SessionAnnounce, kid, u32, st.binary(min_size=32, max_size=32), sig),
    st.builds(wire.Sync1Step, kid, u32, u64, sig),
    st.builds(wire.Sync2Step, kid, u32, st.binary(min_size=16, max_size=16)),
    st.builds(wire.FollowUp, kid, u32, u64, st.integers(min_value=-2**63, max_value=2**63 - 1),
              st.binary(min_size=32, max_size=32), blocks, sig),
    st.builds(wire.DelayReq, kid, u64, kid, sig, u32),
    st.builds(wire.DelayResp, kid, u32, u64, u64, u64, sig),
    st.builds(wire.ErrorResp, kid, u32, u64, st.integers(min_value=0, max_value=255), sig),
)


@given(messages)
def test_round_trip(msg):
    data = wire.encode(msg)
    assert wire.decode(data) == msg
    assert wire.encode(wire.decode(data)) == data
    assert len(data) == wire.FIXED_SIZE[msg.kind] + (wire.TC_BLOCK_LEN * len(msg.tc_blocks) if msg.kind == wire.KIND_FOLLOWUP else 0)


def test_fixed_sizes():
    assert wire.HEADER_LEN == 16
    assert wire.FIXED_SIZE == {
        wire.KIND_ANNOUNCE: 112, wire.KIND_SYNC1: 88, wire.KIND_SYNC2: 32, wire.KIND_FOLLOWUP: 129,
        wire.KIND_DELAY_REQ: 96, wire.KIND_DELAY_RESP: 104, wire.KIND_ERROR: 89,
    }
    assert wire.TC_BLOCK_LEN == 80


def test_header_layout():
    data = wire.encode(wire.Sync1Step(b"ABCDEFGH", 0x01020304, 0x1122334455667788, b"\xee" * 64))
    assert data[:2] == b"ST" and data[2] == 1 and data[3] == wire.KIND_SYNC1
    assert data[4:12] == b"ABCDEFGH"
    assert data[12:16] == bytes([1, 2, 3, 4])
    assert data[16:24] == bytes.fromhex("1122334455667788")
    assert data[24:] == b"\xee" * 64


def test_signed_portions():
    s1 = wire.encode(wire.Sync1Step(b"k" * 8, 1, 5, b"s" * 64))
    assert wire.signed_portion(s1) == s1[:24]
    assert wire.signed_portion(s1) == wire.unsigned_portion(wire.decode(s1))
    fu = wire.FollowUp(b"k" * 8, 2, 9, -3, b"h" * 32,
                       (wire.TransparentClockBlock(b"t" * 8, 7, b"x" * 64),), b"s" * 64)
    data = wire.encode(fu)
    assert wire.signed_portion(data) == data[: wire.FOLLOWUP_SIGNED_LEN] == wire.unsigned_portion(fu)
    assert wire.tc_blocks_bytes(data) == data[65:-64]
    with pytest.raises(wire.WireError):
        wire.signed_portion(wire.encode(wire.Sync2Step(b"k" * 8, 1, b"n" * 16)))


def test_decode_errors():
    good = wire.encode(wire.Sync1Step(b"k" * 8, 1, 5, b"s" * 64))
    with pytest.raises(wire.Truncated):
        wire.decode(good[:-1])
    with pytest.raises(wire.TrailingBytes):
        wire.decode(good + b"\x00")
    with pytest.raises(wire.UnknownKind):
        wire.decode(good[:3] + bytes([9]) + good[4:])
    with pytest.raises(wire.BadMagic):
        wire.decode(b"XX" + good[2:])
    with pytest.raises(wire.BadMagic):
        wire.decode(good[:2] + b"\x02" + good[3:])
    with pytest.raises(wire.Truncated):
        wire.decode(b"ST")


def test_encode_range_checks():
    with pytest.raises(wire.FieldRange):
        wire.encode(wire.Sync1Step(b"k" * 8, 2**32, 0, b"s" * 64))
    with pytest.raises(wire.FieldRange):
        wire.encode(wire.Sync1Step(b"k" * 8, 0, -1, b"s" * 64))
    with pytest.raises(wire.WireError):
        wire.encode(wire.Sync1Step(b"k" * 7, 0, 0, b"s" * 64))


def test_auth_overhead_constants():
    assert wire.SYNC1_AUTH_OVERHEAD == 64 + 4
    assert wire.unauthenticated_size(wire.KIND_SYNC1) == 88 - 68 == 20
    assert wire.SYNC2_PAIR_AUTH_OVERHEAD == 16 + 32 + 64 + 2 * 4


def test_fuzz_decode_total():
    """Decoding is total: any bytes either parse or raise WireError."""
    rng = random.Random(1234)
    seeds = [wire.encode(m) for m in (
        wire.SessionAnnounce(b"k" * 8, 0, b"p" * 32, b"s" * 64),
        wire.Sync1Step(b"k" * 8, 1, 5, b"s" * 64),
        wire.Sync2Step(b"k" * 8, 1, b"n" * 16),
        wire.FollowUp(b"k" * 8, 2, 9, 0, b"h" * 32, (), b"s" * 64),
        wire.DelayReq(b"k" * 8, 7, b"r" * 8, b"s" * 64),
        wire.DelayResp(b"k" * 8, 3, 1, 2, 3, b"s" * 64),
        wire.ErrorResp(b"k" * 8, 3, 1, 1, b"s" * 64),
    )]
    parsed = 0
    for i in range(100_000):
        if i % 2:
            data = bytearray(rng.choice(seeds))
            for _ in range(rng.randint(1, 4)):
                op = rng.randrange(3)
                if op == 0 and data:
                    data[rng.randrange(len(data))] = rng.randrange(256)
                elif op == 1 and data:
                    del data[rng.randrange(len(data)):]
                else:
                    data += bytes(rng.randrange(256) for _ in range(rng.randint(1, 90)))
        else:
            data = b"ST\x01" + bytes(rng.randrange(256) for _ in range(rng.randint(0, 300)))
        try:
            msg = wire.decode(bytes(data))
        except wire.WireError:
            continue
        parsed += 1
        assert wire.encode(msg) == bytes(data)
    assert parsed > 0
