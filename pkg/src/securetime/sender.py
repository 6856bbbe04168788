"""Sender state machine: sessions, multicast emission, delay-request responder."""

from __future__ import annotations

import random
from dataclasses import dataclass, field

from . import crypto, wire
from .clock import NetParams
from .crypto import KeyPair

MODE_1STEP = "1-step"
MODE_2STEP = "2-step"
NONCE_SPACE_FULL = 2 ** (8 * wire.NONCE_LEN)


class RotationRequired(RuntimeError):
    pass


class NoPendingSync(RuntimeError):
    pass


@dataclass
class SessionContext:
    keypair: KeyPair
    key_id: bytes
    next_seq: int = 0
    nonces_used: int = 0
    announce_bytes: bytes = b""
    used_nonces: set[int] = field(default_factory=set)


@dataclass(frozen=True)
class PendingSync:
    seq: int
    sync_bytes: bytes


class Sender:
    """Event-driven sender; the simulator decides when each method runs."""

    def __init__(
        self,
        long_term: KeyPair,
        net: NetParams,
        *,
        scheme: str = "ed25519",
        mode: str = MODE_1STEP,
        sync_interval: int = 1_000_000_000,
        announce_interval: int | None = None,
        rotation_threshold: int = wire.ROTATION_THRESHOLD,
        nonce_space: int = NONCE_SPACE_FULL,
    ) -> None:
        if mode not in (MODE_1STEP, MODE_2STEP):
            raise ValueError(f"unknown mode {mode!r}")
        if not 2 <= rotation_threshold <= wire.ROTATION_THRESHOLD:
            raise ValueError("rotation threshold out of range")
        if not 1 <= nonce_space <= NONCE_SPACE_FULL:
            raise ValueError("nonce space out of range")
        self.scheme = crypto.get_scheme(scheme)
        self.long_term = long_term
        self.net = net
        self.mode = mode
        self.sync_interval = sync_interval
        self.announce_interval = announce_interval or 64 * sync_interval
        self.rotation_threshold = rotation_threshold
        self.nonce_space = nonce_space
        self.registered_receivers: dict[bytes, bytes] = {}
        self.session: SessionContext | None = None
        self.sessions_started = 0
        self.pending: PendingSync | None = None
        # receiver_id -> (last t1 answered, t2 of that answer)
        self._last_request: dict[bytes, tuple[int, int]] = {}

    # -- sessions -----------------------------------------------------------

    def register_receiver(self, receiver_id: bytes, public: bytes) -> None:
        self.registered_receivers[bytes(receiver_id)] = bytes(public)

    def start_session(self, rng: random.Random) -> wire.SessionAnnounce:
        seed = rng.getrandbits(8 * crypto.SEED_LEN).to_bytes(crypto.SEED_LEN, "big")
        kp = crypto.generate_keypair(self.scheme, seed)
        kid = crypto.key_id(kp.public)
        if self.session is not None and kid == self.session.key_id:
            raise crypto.CryptoError("session key id collision")
        ann = wire.SessionAnnounce(kid, 0, kp.public)
        ann = wire.with_signature(ann, self.scheme.sign(self.long_term.secret, wire.unsigned_portion(ann)))
        self.session = SessionContext(kp, kid, announce_bytes=wire.encode(ann))
        self.sessions_started += 1
        self.pending = None
        return ann

    def maybe_rotate_session(self, rng: random.Random, needed: int = 1) -> wire.SessionAnnounce | None:
        """Rotate when fewer than ``needed`` sequence numbers remain."""
        if self.session is None or self.session.next_seq + needed > self.rotation_threshold:
            return self.start_session(rng)
        return None

    # -- multicast ----------------------------------------------------------

    def _take_seq(self) -> int:
        s = self._require_session()
        if s.next_seq >= self.rotation_threshold:
            raise RotationRequired(f"seq {s.next_seq} reached rotation threshold")
        seq = s.next_seq
        s.next_seq += 1
        return seq

    def _require_session(self) -> SessionContext:
        if self.session is None:
            raise RuntimeError("no session started")
        return self.session

    def _sign(self, msg):
        s = self._require_session()
        return wire.with_signature(msg, self.scheme.sign(s.keypair.secret, wire.unsigned_portion(msg)))

    def emit_sync_1step(self, now_sender: int) -> wire.Sync1Step:
        if self.mode != MODE_1STEP:
            raise RuntimeError("sender is not in 1-step mode")
        seq = self._take_seq()
        return self._sign(wire.Sync1Step(self.session.key_id, seq, now_sender))

    def _draw_nonce(self, rng: random.Random) -> bytes:
        s = self._require_session()
        if self.nonce_space == NONCE_SPACE_FULL:
            value = rng.getrandbits(8 * wire.NONCE_LEN)
        else:
            if len(s.used_nonces) >= self.nonce_space:
                raise RotationRequired("nonce space exhausted")
            while True:
                value = rng.randrange(self.nonce_space)
                if value not in s.used_nonces:
                    break
            s.used_nonces.add(value)
        return value.to_bytes(wire.NONCE_LEN, "big")

    def emit_sync_2step(self, rng: random.Random) -> wire.Sync2Step:
        if self.mode != MODE_2STEP:
            raise RuntimeError("sender is not in 2-step mode")
        if self._require_session().next_seq + 2 > self.rotation_threshold:
            raise RotationRequired("no room for a SYNC/FOLLOWUP pair")
        nonce = self._draw_nonce(rng)
        seq = self._take_seq()
        msg = wire.Sync2Step(self.session.key_id, seq, nonce)
        self.session.nonces_used += 1
        self.pending = PendingSync(seq, wire.encode(msg))
        return msg

    def emit_followup(self, precise_send_time: int, pending: PendingSync | None = None) -> wire.FollowUp:
        pending = pending or self.pending
        if pending is None:
            raise NoPendingSync("no SYNC awaiting its FOLLOWUP")
        s = self._require_session()
        link = crypto.digest(pending.sync_bytes + s.keypair.public)
        seq = self._take_seq()
        if seq != pending.seq + 1:
            raise NoPendingSync("FOLLOWUP no longer adjacent to its SYNC")
        self.pending = None
        return self._sign(wire.FollowUp(s.key_id, seq, precise_send_time, 0, link))

    # -- delay measurement --------------------------------------------------

    def handle_delay_request(
        self, data: bytes, t2_sender: int, t3_sender: int | None = None
    ) -> wire.DelayResp | wire.ErrorResp | None:
        """Answer an authenticated delay request; ``None`` means drop silently.

        Requests from unknown receivers, with bad signatures, or repeating the
        last answered t1 are dropped. At most one request per receiver is
        answered within any delta_max window. t1 need not grow: a receiver's
        clock may step back between requests.
        """
        t3 = t2_sender if t3_sender is None else t3_sender
        try:
            req = wire.decode(data)
        except wire.WireError:
            return None
        if not isinstance(req, wire.DelayReq) or self.session is None:
            return None
        pk = self.registered_receivers.get(req.receiver_id)
        if pk is None or crypto.key_id(pk) != req.key_id:
            return None
        if not self.scheme.verify(pk, wire.unsigned_portion(req), req.signature):
            return None
        last = self._last_request.get(req.receiver_id)
        if last is not None and (req.t1 == last[0] or t2_sender - last[1] < self.net.delta_max):
            return None
        self._last_request[req.receiver_id] = (req.t1, t2_sender)
        s = self.session
        observed = t2_sender - req.t1
        if self.net.delta_min <= observed <= self.net.delta_max:
            return self._sign(wire.DelayResp(s.key_id, s.next_seq, req.t1, t2_sender, t3))
        return self._sign(wire.ErrorResp(s.key_id, s.next_seq, t3, wire.ERROR_DELAY_ATTACK))
