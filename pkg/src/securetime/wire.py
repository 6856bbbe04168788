"""Bit-exact binary encoding of every protocol message.

All integers are big-endian. Every message starts with a 16-byte header::

    magic "ST" | version 0x01 | kind | session key id (8) | seq (u32)

Signed messages carry a 64-byte signature as their final field, covering
every byte before it. The FOLLOWUP is the exception: its signature covers
only the bytes before the transparent-clock block count, so on-path
clocks can append blocks without the sender's key.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, replace
from typing import Union

MAGIC = b"ST"
VERSION = 1

HEADER = struct.Struct(">2sBB8sI")
HEADER_LEN = HEADER.size  # 16
SEQ_LEN = 4
KEY_ID_LEN = 8
SIG_LEN = 64
PUBKEY_LEN = 32
NONCE_LEN = 16
HASH_LEN = 32
TS_LEN = 8
TC_BLOCK_LEN = 8 + 8 + SIG_LEN

SEQ_MAX = 2**32 - 1
ROTATION_THRESHOLD = 2**32 - 2**16

KIND_ANNOUNCE = 1
KIND_SYNC1 = 2
KIND_SYNC2 = 3
KIND_FOLLOWUP = 4
KIND_DELAY_REQ = 5
KIND_DELAY_RESP = 6
KIND_ERROR = 7

ERROR_DELAY_ATTACK = 1

_U64 = struct.Struct(">Q")
_I64 = struct.Struct(">q")


class WireError(ValueError):
    """Raised for any byte string that is not a well-formed message."""

    reason = "malformed"


class BadMagic(WireError):
    reason = "bad-magic"


class UnknownKind(WireError):
    reason = "unknown-kind"


class Truncated(WireError):
    reason = "truncated"


class TrailingBytes(WireError):
    reason = "trailing-bytes"


class FieldRange(WireError):
    reason = "field-range"


@dataclass(frozen=True)
class SessionAnnounce:
    key_id: bytes
    seq: int
    session_public_key: bytes
    signature: bytes = b""
    kind = KIND_ANNOUNCE


@dataclass(frozen=True)
class Sync1Step:
    key_id: bytes
    seq: int
    origin_timestamp: int
    signature: bytes = b""
    kind = KIND_SYNC1


@dataclass(frozen=True)
class Sync2Step:
    key_id: bytes
    seq: int
    nonce: bytes
    kind = KIND_SYNC2


@dataclass(frozen=True)
class TransparentClockBlock:
    tc_id: bytes
    residence: int
    signature: bytes = b""


@dataclass(frozen=True)
class FollowUp:
    key_id: bytes
    seq: int
    precise_origin_timestamp: int
    correction: int
    link_hash: bytes
    tc_blocks: tuple[TransparentClockBlock, ...] = ()
    signature: bytes = b""
    kind = KIND_FOLLOWUP


@dataclass(frozen=True)
class DelayReq:
    key_id: bytes
    t1: int
    receiver_id: bytes
    signature: bytes = b""
    seq: int = 0
    kind = KIND_DELAY_REQ


@dataclass(frozen=True)
class DelayResp:
    key_id: bytes
    seq: int
    t1_echo: int
    t2: int
    t3: int
    signature: bytes = b""
    kind = KIND_DELAY_RESP


@dataclass(frozen=True)
class ErrorResp:
    key_id: bytes
    seq: int
    sender_timestamp: int
    reason: int = ERROR_DELAY_ATTACK
    signature: bytes = b""
    kind = KIND_ERROR


Message = Union[SessionAnnounce, Sync1Step, Sync2Step, FollowUp, DelayReq, DelayResp, ErrorResp]

SIGNED_KINDS = {KIND_ANNOUNCE, KIND_SYNC1, KIND_FOLLOWUP, KIND_DELAY_REQ, KIND_DELAY_RESP, KIND_ERROR}

# Fixed total sizes; FOLLOWUP grows by TC_BLOCK_LEN per block.
FIXED_SIZE = {
    KIND_ANNOUNCE: HEADER_LEN + PUBKEY_LEN + SIG_LEN,
    KIND_SYNC1: HEADER_LEN + TS_LEN + SIG_LEN,
    KIND_SYNC2: HEADER_LEN + NONCE_LEN,
    KIND_FOLLOWUP: HEADER_LEN + TS_LEN + 8 + HASH_LEN + 1 + SIG_LEN,
    KIND_DELAY_REQ: HEADER_LEN + TS_LEN + 8 + SIG_LEN,
    KIND_DELAY_RESP: HEADER_LEN + 3 * TS_LEN + SIG_LEN,
    KIND_ERROR: HEADER_LEN + TS_LEN + 1 + SIG_LEN,
}
FOLLOWUP_SIGNED_LEN = HEADER_LEN + TS_LEN + 8 + HASH_LEN


def _check_bytes(name: str, value: bytes, size: int) -> bytes:
    if not isinstance(value, (bytes, bytearray)) or len(value) != size:
        raise FieldRange(f"{name} must be {size} bytes")
    return bytes(value)


def _u64(name: str, value: int) -> bytes:
    if not 0 <= value < 2**64:
        raise FieldRange(f"{name} out of u64 range: {value}")
    return _U64.pack(value)


def _header(kind: int, key_id: bytes, seq: int) -> bytes:
    if not 0 <= seq <= SEQ_MAX:
        raise FieldRange(f"seq out of u32 range: {seq}")
    return HEADER.pack(MAGIC, VERSION, kind, _check_bytes("key_id", key_id, KEY_ID_LEN), seq)


def _body(msg: Message) -> bytes:
    """Everything the message's own signature covers."""
    head = _header(msg.kind, msg.key_id, msg.seq)
    if isinstance(msg, SessionAnnounce):
        return head + _check_bytes("session_public_key", msg.session_public_key, PUBKEY_LEN)
    if isinstance(msg, Sync1Step):
        return head + _u64("origin_timestamp", msg.origin_timestamp)
    if isinstance(msg, Sync2Step):
        return head + _check_bytes("nonce", msg.nonce, NONCE_LEN)
    if isinstance(msg, FollowUp):
        if not -(2**63) <= msg.correction < 2**63:
            raise FieldRange("correction out of i64 range")
        return (
            head
            + _u64("precise_origin_timestamp", msg.precise_origin_timestamp)
            + _I64.pack(msg.correction)
            + _check_bytes("link_hash", msg.link_hash, HASH_LEN)
        )
    if isinstance(msg, DelayReq):
        return head + _u64("t1", msg.t1) + _check_bytes("receiver_id", msg.receiver_id, 8)
    if isinstance(msg, DelayResp):
        return head + _u64("t1_echo", msg.t1_echo) + _u64("t2", msg.t2) + _u64("t3", msg.t3)
    if isinstance(msg, ErrorResp):
        if not 0 <= msg.reason <= 255:
            raise FieldRange("reason out of u8 range")
        return head + _u64("sender_timestamp", msg.sender_timestamp) + bytes([msg.reason])
    raise TypeError(f"not a protocol message: {type(msg).__name__}")


def encode_tc_block(block: TransparentClockBlock) -> bytes:
    return (
        _check_bytes("tc_id", block.tc_id, 8)
        + _u64("residence", block.residence)
        + _check_bytes("tc_signature", block.signature, SIG_LEN)
    )


def tc_signing_input(followup_signed: bytes, prior_blocks: bytes, tc_id: bytes, residence: int) -> bytes:
    return followup_signed + prior_blocks + tc_id + _u64("residence", residence)


def encode(msg: Message) -> bytes:
    body = _body(msg)
    if isinstance(msg, Sync2Step):
        return body
    if isinstance(msg, FollowUp):
        if len(msg.tc_blocks) > 255:
            raise FieldRange("too many transparent-clock blocks")
        blocks = b"".join(encode_tc_block(b) for b in msg.tc_blocks)
        return body + bytes([len(msg.tc_blocks)]) + blocks + _check_bytes("signature", msg.signature, SIG_LEN)
    return body + _check_bytes("signature", msg.signature, SIG_LEN)


def unsigned_portion(msg: Message) -> bytes:
    """The bytes a message's signature must cover, from the typed message."""
    if msg.kind not in SIGNED_KINDS:
        raise WireError("message kind carries no signature")
    return _body(msg)


def with_signature(msg: Message, signature: bytes) -> Message:
    return replace(msg, signature=signature)


def peek_kind(data: bytes) -> int:
    if len(data) < HEADER_LEN:
        raise Truncated("shorter than header")
    magic, version, kind, _, _ = HEADER.unpack_from(data)
    if magic != MAGIC or version != VERSION:
        raise BadMagic("bad magic or version")
    if kind not in FIXED_SIZE:
        raise UnknownKind(f"unknown kind {kind}")
    return kind


def decode(data: bytes) -> Message:
    """Parse a message. Total: any input either decodes or raises WireError."""
    data = bytes(data)
    kind = peek_kind(data)
    _, _, _, kid, seq = HEADER.unpack_from(data)
    need = FIXED_SIZE[kind]
    if kind == KIND_FOLLOWUP and len(data) >= FOLLOWUP_SIGNED_LEN + 1:
        need += data[FOLLOWUP_SIGNED_LEN] * TC_BLOCK_LEN
    if len(data) < need:
        raise Truncated(f"kind {kind}: need {need} bytes, got {len(data)}")
    if len(data) > need:
        raise TrailingBytes(f"kind {kind}: {len(data) - need} trailing bytes")
    p = HEADER_LEN
    if kind == KIND_ANNOUNCE:
        return SessionAnnounce(kid, seq, data[p : p + PUBKEY_LEN], data[p + PUBKEY_LEN :])
    if kind == KIND_SYNC1:
        (ts,) = _U64.unpack_from(data, p)
        return Sync1Step(kid, seq, ts, data[p + TS_LEN :])
    if kind == KIND_SYNC2:
        return Sync2Step(kid, seq, data[p:])
    if kind == KIND_FOLLOWUP:
        (pot,) = _U64.unpack_from(data, p)
        (corr,) = _I64.unpack_from(data, p + 8)
        link = data[p + 16 : p + 16 + HASH_LEN]
        count = data[FOLLOWUP_SIGNED_LEN]
        q = FOLLOWUP_SIGNED_LEN + 1
        blocks = []
        for _ in range(count):
            (res,) = _U64.unpack_from(data, q + 8)
            blocks.append(TransparentClockBlock(data[q : q + 8], res, data[q + 16 : q + TC_BLOCK_LEN]))
            q += TC_BLOCK_LEN
        return FollowUp(kid, seq, pot, corr, link, tuple(blocks), data[q:])
    if kind == KIND_DELAY_REQ:
        (t1,) = _U64.unpack_from(data, p)
        return DelayReq(kid, t1, data[p + 8 : p + 16], data[p + 16 :], seq=seq)
    if kind == KIND_DELAY_RESP:
        t1, t2, t3 = struct.unpack_from(">QQQ", data, p)
        return DelayResp(kid, seq, t1, t2, t3, data[p + 24 :])
    (ts,) = _U64.unpack_from(data, p)
    return ErrorResp(kid, seq, ts, data[p + 8], data[p + 9 :])


def signed_portion(data: bytes, kind: int | None = None) -> bytes:
    """The exact prefix of ``data`` covered by its signature."""
    actual = peek_kind(data)
    if kind is not None and kind != actual:
        raise WireError(f"expected kind {kind}, found {actual}")
    if actual not in SIGNED_KINDS:
        raise WireError("message kind carries no signature")
    decode(data)
    if actual == KIND_FOLLOWUP:
        return bytes(data[:FOLLOWUP_SIGNED_LEN])
    return bytes(data[:-SIG_LEN])


def signature_of(data: bytes) -> bytes:
    return bytes(data[-SIG_LEN:])


def tc_blocks_bytes(data: bytes) -> bytes:
    """Encoded TC blocks of a FOLLOWUP (empty for none)."""
    return bytes(data[FOLLOWUP_SIGNED_LEN + 1 : -SIG_LEN])


# Per-message authentication overhead, counted against the unauthenticated
# layout (no sequence number, no signature, no nonce, no link hash).
SYNC1_AUTH_OVERHEAD = SIG_LEN + SEQ_LEN
SYNC2_PAIR_AUTH_OVERHEAD = NONCE_LEN + HASH_LEN + SIG_LEN + 2 * SEQ_LEN


def unauthenticated_size(kind: int) -> int:
    """Size of the same message without any security fields."""
    if kind == KIND_SYNC1:
        return FIXED_SIZE[kind] - SIG_LEN - SEQ_LEN
    if kind == KIND_SYNC2:
        return FIXED_SIZE[kind] - NONCE_LEN - SEQ_LEN
    if kind == KIND_FOLLOWUP:
        return FIXED_SIZE[kind] - SIG_LEN - HASH_LEN - SEQ_LEN
    raise ValueError(f"no unauthenticated equivalent for kind {kind}")
