"""Receiver state machine.

Every handler takes raw bytes plus the local arrival time and returns a
:class:`Decision`. A rejected input leaves the receiver state untouched, with
one exception required by the 2-step rules: a verified, fresh FOLLOWUP that
matches no buffered SYNC discards the buffered candidates it was checked
against.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

from . import crypto, wire
from .clock import NetParams, SimClock, apply_correction, clamp_correction
from .crypto import KeyPair
from .units import round_half_away

DEFAULT_BUFFER = 32

ALARM_DELAY = "delay-attack-suspected"
ALARM_TIMEOUT = "measurement-timeout"
ALARM_SESSION = "session-mismatch"


@dataclass(frozen=True)
class Alarm:
    at: int
    kind: str
    detail: str = ""


@dataclass
class Decision:
    event: str
    verdict: str
    reason: str = ""
    delta: int = 0
    raw_offset: int | None = None
    clamped: bool = False
    accepted: tuple[bytes, ...] = ()
    outgoing: bytes | None = None
    alarm: Alarm | None = None
    note: str = ""

    @property
    def ok(self) -> bool:
        return self.verdict in ("accepted", "buffered", "bootstrap", "sent")


@dataclass
class PendingMeasurement:
    t1: int
    deadline: int


@dataclass
class BufferedSync:
    arrival: int
    seq: int
    data: bytes


def _reject(event: str, reason: str, verdict: str = "rejected") -> Decision:
    return Decision(event, verdict, reason)


class Receiver:
    def __init__(
        self,
        sender_long_term_pk: bytes,
        net: NetParams,
        own_keypair: KeyPair,
        clock: SimClock | None = None,
        *,
        scheme: str = "ed25519",
        buffer_capacity: int = DEFAULT_BUFFER,
        bootstrap: bool = True,
        bootstrap_followup: bool = False,
        trusted_tcs: dict[bytes, bytes] | None = None,
    ) -> None:
        self.scheme = crypto.get_scheme(scheme)
        self.sender_long_term_pk = bytes(sender_long_term_pk)
        self.net = net
        self.own_keypair = own_keypair
        self.receiver_id = crypto.key_id(own_keypair.public)
        self.clock = clock if clock is not None else SimClock()
        self.buffer_capacity = buffer_capacity
        self.bootstrap = bootstrap
        self.bootstrap_followup = bootstrap_followup
        self.trusted_tcs = dict(trusted_tcs or {})
        self.measurement_interval = net.measurement_interval

        self.session_pk: bytes | None = None
        self.session_key_id: bytes | None = None
        self.last_seq: int | None = None
        self.t_last = 0
        self.path_delay = net.delta_min
        self.last_measurement_at: int | None = None
        self.pending: PendingMeasurement | None = None
        # Set after a bootstrap step: the path delay is still a guess, so measure again soon.
        self.retry_at: int | None = None
        # Newest sender timestamp from an accepted reply. ErrorResp echoes no t1,
        # so this is what keeps an old one from answering a later request.
        self.last_reply_ts: int | None = None
        self.sync_buffer: list[BufferedSync] = []
        self.alarm_log: list[Alarm] = []
        self.confirmed = False
        self.synchronized = False
        # key id -> public key of every session this receiver has left behind
        self.retired_keys: dict[bytes, bytes] = {}

    # -- helpers ------------------------------------------------------------

    def start(self, local_now: int) -> None:
        """Anchor t_last at the receiver's first local reading."""
        self.t_last = local_now

    def snapshot(self) -> tuple:
        return (
            self.session_pk,
            self.session_key_id,
            self.last_seq,
            self.t_last,
            self.path_delay,
            self.last_measurement_at,
            None if self.pending is None else (self.pending.t1, self.pending.deadline),
            self.retry_at,
            self.last_reply_ts,
            tuple((b.arrival, b.seq, b.data) for b in self.sync_buffer),
            tuple(self.alarm_log),
            self.confirmed,
            self.synchronized,
            frozenset(self.retired_keys.items()),
            self.clock.offset,
        )

    def _alarm(self, at: int, kind: str, detail: str = "") -> Alarm:
        alarm = Alarm(at, kind, detail)
        self.alarm_log.append(alarm)
        # Fall back to the regular interval; retrying every 2*delta_max would only repeat the alarm.
        self.retry_at = None
        return alarm

    def _fresh(self, seq: int) -> bool:
        return self.last_seq is None or seq > self.last_seq

    def _correct(self, raw: int, t_arr: int) -> tuple[int, bool]:
        # An accepted message arriving "before" t_last (possible right after
        # a negative step) gets a zero budget instead of an order error.
        t_arr = max(t_arr, self.t_last)
        delta = clamp_correction(raw, t_arr, self.t_last, self.net.rho_max)
        apply_correction(self.clock, delta)
        self.t_last = t_arr
        return delta, delta != raw

    def handle(self, data: bytes, t_arr: int) -> Decision:
        """Dispatch on the wire kind."""
        try:
            kind = wire.peek_kind(data)
        except wire.WireError as exc:
            return _reject("unknown", exc.reason)
        handler = {
            wire.KIND_ANNOUNCE: lambda: self.handle_session_announce(data),
            wire.KIND_SYNC1: lambda: self.handle_sync_1step(data, t_arr),
            wire.KIND_SYNC2: lambda: self.handle_sync_2step(data, t_arr),
            wire.KIND_FOLLOWUP: lambda: self.handle_followup(data, t_arr),
            wire.KIND_DELAY_RESP: lambda: self.handle_delay_response(data, t_arr),
            wire.KIND_ERROR: lambda: self.handle_error_response(data, t_arr),
        }.get(kind)
        if handler is None:
            return _reject("unexpected", "unexpected-kind", "ignored")
        return handler()

    # -- sessions -----------------------------------------------------------

    def handle_session_announce(self, data: bytes) -> Decision:
        ev = "announce"
        try:
            msg = wire.decode(data)
        except wire.WireError as exc:
            return _reject(ev, exc.reason)
        if not isinstance(msg, wire.SessionAnnounce):
            return _reject(ev, "malformed")
        if not self.scheme.verify(self.sender_long_term_pk, wire.unsigned_portion(msg), msg.signature):
            return _reject(ev, "bad-signature")
        if crypto.key_id(msg.session_public_key) != msg.key_id:
            return _reject(ev, "key-id-mismatch")
        if msg.key_id == self.session_key_id:
            return _reject(ev, "current-session", "ignored")
        if msg.key_id in self.retired_keys:
            return _reject(ev, "retired-session")
        if self.session_key_id is not None:
            self.retired_keys[self.session_key_id] = self.session_pk
        self.session_pk = msg.session_public_key
        self.session_key_id = msg.key_id
        self.last_seq = msg.seq - 1
        self.sync_buffer.clear()
        self.pending = None
        self.confirmed = False
        self.last_measurement_at = None
        self.retry_at = None
        return Decision(ev, "accepted", accepted=(bytes(data),))

    # -- 1-step -------------------------------------------------------------

    def handle_sync_1step(self, data: bytes, t_arr: int) -> Decision:
        ev = "sync1"
        try:
            msg = wire.decode(data)
        except wire.WireError as exc:
            return _reject(ev, exc.reason)
        if not isinstance(msg, wire.Sync1Step):
            return _reject(ev, "malformed")
        if self.session_pk is None:
            return _reject(ev, "no-session")
        if msg.key_id != self.session_key_id:
            return _reject(ev, "wrong-session")
        if not self.scheme.verify(self.session_pk, wire.unsigned_portion(msg), msg.signature):
            return _reject(ev, "bad-signature")
        if not self._fresh(msg.seq):
            return _reject(ev, "stale-seq")
        if not self.confirmed:
            return _reject(ev, "unconfirmed-session")
        raw = (msg.origin_timestamp + self.path_delay) - t_arr
        delta, clamped = self._correct(raw, t_arr)
        self.last_seq = msg.seq
        return Decision(ev, "accepted", delta=delta, raw_offset=raw, clamped=clamped, accepted=(bytes(data),))

    # -- 2-step -------------------------------------------------------------

    def handle_sync_2step(self, data: bytes, t_arr: int) -> Decision:
        ev = "sync2"
        try:
            msg = wire.decode(data)
        except wire.WireError as exc:
            return _reject(ev, exc.reason, "discarded")
        if not isinstance(msg, wire.Sync2Step):
            return _reject(ev, "malformed", "discarded")
        if self.session_pk is None:
            return _reject(ev, "no-session", "discarded")
        if msg.key_id != self.session_key_id:
            return _reject(ev, "wrong-session", "discarded")
        if not self._fresh(msg.seq):
            return _reject(ev, "stale-seq", "discarded")
        data = bytes(data)
        if any(b.data == data for b in self.sync_buffer):
            return _reject(ev, "duplicate", "discarded")
        if len(self.sync_buffer) >= self.buffer_capacity:
            d = _reject(ev, "buffer-full", "discarded")
            d.note = "buffer-pressure"
            return d
        self.sync_buffer.append(BufferedSync(t_arr, msg.seq, data))
        return Decision(ev, "buffered")

    def _trusted_residence(self, data: bytes, msg: wire.FollowUp) -> int:
        signed = wire.signed_portion(data, wire.KIND_FOLLOWUP)
        blocks = wire.tc_blocks_bytes(data)
        total = 0
        for i, block in enumerate(msg.tc_blocks):
            pk = self.trusted_tcs.get(block.tc_id)
            if pk is None:
                continue
            prior = blocks[: i * wire.TC_BLOCK_LEN]
            payload = wire.tc_signing_input(signed, prior, block.tc_id, block.residence)
            if self.scheme.verify(pk, payload, block.signature):
                total += block.residence
        return total

    def handle_followup(self, data: bytes, t_arr: int) -> Decision:
        ev = "followup"
        try:
            msg = wire.decode(data)
        except wire.WireError as exc:
            return _reject(ev, exc.reason)
        if not isinstance(msg, wire.FollowUp):
            return _reject(ev, "malformed")
        if self.session_pk is None:
            return _reject(ev, "no-session")
        if msg.key_id != self.session_key_id:
            return _reject(ev, "wrong-session")
        if not self.scheme.verify(self.session_pk, wire.signed_portion(data), msg.signature):
            return _reject(ev, "bad-signature")
        if not self._fresh(msg.seq):
            return _reject(ev, "stale-seq")
        if not self.confirmed:
            self.sync_buffer = [b for b in self.sync_buffer if b.seq != msg.seq - 1]
            return _reject(ev, "unconfirmed-session")
        candidates = [b for b in self.sync_buffer if b.seq == msg.seq - 1]
        match = next(
            (b for b in candidates if crypto.digest(b.data + self.session_pk) == msg.link_hash),
            None,
        )
        if match is None:
            # Verified and fresh, yet unlinked: drop the SYNCs it rules out.
            self.sync_buffer = [b for b in self.sync_buffer if b.seq != msg.seq - 1]
            return _reject(ev, "hash-mismatch" if candidates else "no-matching-sync")
        effective_send = msg.precise_origin_timestamp + msg.correction + self._trusted_residence(data, msg)
        raw = (effective_send + self.path_delay) - match.arrival
        delta, clamped = self._correct(raw, t_arr)
        self.last_seq = msg.seq
        # Keep SYNCs that overtook this FOLLOWUP; everything older is now stale.
        self.sync_buffer = [b for b in self.sync_buffer if b.seq > msg.seq]
        return Decision(
            ev, "accepted", delta=delta, raw_offset=raw, clamped=clamped,
            accepted=(match.data, bytes(data)),
        )

    # -- delay measurement --------------------------------------------------

    def next_measurement_at(self) -> int | None:
        """Local time the next delay request is due; ``None`` before any session."""
        if self.session_pk is None:
            return None
        if self.retry_at is not None:
            return self.retry_at
        if self.last_measurement_at is None:
            return self.t_last
        return self.last_measurement_at + self.measurement_interval

    def next_wakeup(self) -> int | None:
        """Local time of the next scheduled tick action, if any."""
        if self.pending is not None:
            return self.pending.deadline
        return self.next_measurement_at()

    def measurement_due(self, now_local: int) -> bool:
        if self.pending is not None or self.session_pk is None:
            return False
        if self.last_measurement_at is None:
            return True
        return now_local >= self.next_measurement_at()

    def tick(self, now_local: int) -> Decision | None:
        if self.pending is not None:
            if now_local > self.pending.deadline:
                self.pending = None
                self.last_measurement_at = now_local
                alarm = self._alarm(now_local, ALARM_TIMEOUT, "no delay response within 2*delta_max")
                return Decision("tick", "alarm", ALARM_TIMEOUT, alarm=alarm)
            return None
        if not self.measurement_due(now_local):
            return None
        req = wire.DelayReq(self.receiver_id, now_local, self.receiver_id)
        req = wire.with_signature(req, self.scheme.sign(self.own_keypair.secret, wire.unsigned_portion(req)))
        self.pending = PendingMeasurement(now_local, now_local + 2 * self.net.delta_max)
        return Decision("tick", "sent", outgoing=wire.encode(req))

    def _in_range(self, observed: int) -> bool:
        return self.net.delta_min <= observed <= self.net.delta_max

    def _late(self, ev: str, at: int) -> Decision:
        """An authentic answer that missed the 2*delta_max window counts as a timeout."""
        self.pending = None
        self.last_measurement_at = at
        alarm = self._alarm(at, ALARM_TIMEOUT, "delay response after 2*delta_max")
        return Decision(ev, "alarm", ALARM_TIMEOUT, alarm=alarm)

    def _measurement_done(self, at: int, seq: int) -> None:
        self.last_seq = seq - 1 if self.last_seq is None else max(self.last_seq, seq - 1)
        self.t_last = max(self.t_last, at)
        self.last_measurement_at = at
        self.pending = None
        # A FOLLOWUP must exceed last_seq, so older buffered SYNCs can never match.
        self.sync_buffer = [b for b in self.sync_buffer if b.seq >= self.last_seq]
        self.retry_at = None
        self.confirmed = True
        self.synchronized = True

    def _bootstrap_step(self, ev: str, sender_ts: int, t_arr: int, seq: int, data: bytes) -> Decision:
        """Trust-on-first-use: jump to the sender's timestamp plus the path-delay guess.

        By default the step completes the first measurement. With
        ``bootstrap_followup`` the receiver instead stays unsynchronized,
        applies no SYNC corrections, and re-measures after 2*delta_max
        (enough spacing for the sender's rate limit) until an in-range
        DelayResp has measured the path.
        """
        target = sender_ts + self.path_delay
        delta = target - t_arr
        apply_correction(self.clock, delta)
        if not self.bootstrap_followup:
            self.t_last = target
            self._measurement_done(target, seq)
            return Decision(ev, "bootstrap", delta=delta, accepted=(bytes(data),))
        self.last_seq = seq - 1 if self.last_seq is None else max(self.last_seq, seq - 1)
        self.t_last = target
        self.last_measurement_at = target
        self.pending = None
        self.sync_buffer = [b for b in self.sync_buffer if b.seq >= self.last_seq]
        self.retry_at = target + 2 * self.net.delta_max
        return Decision(ev, "bootstrap", delta=delta, accepted=(bytes(data),))

    def _may_bootstrap(self) -> bool:
        return self.bootstrap and not self.synchronized

    def handle_delay_response(self, data: bytes, t4: int) -> Decision:
        ev = "delay-resp"
        try:
            msg = wire.decode(data)
        except wire.WireError as exc:
            return _reject(ev, exc.reason)
        if not isinstance(msg, wire.DelayResp):
            return _reject(ev, "malformed")
        if self.pending is None or msg.t1_echo != self.pending.t1:
            return _reject(ev, "unsolicited", "ignored")
        if msg.key_id != self.session_key_id:
            # Only an authentic answer from an older session proves a mismatch;
            # anything else is unauthenticated and must not raise an alarm.
            old_pk = self.retired_keys.get(msg.key_id)
            if old_pk is None:
                return _reject(ev, "unknown-session")
            if not self.scheme.verify(old_pk, wire.unsigned_portion(msg), msg.signature):
                return _reject(ev, "bad-signature")
            self.pending = None
            self.confirmed = False
            self.last_measurement_at = t4
            alarm = self._alarm(t4, ALARM_SESSION, "delay response names another session key")
            return Decision(ev, "alarm", ALARM_SESSION, alarm=alarm)
        if not self.scheme.verify(self.session_pk, wire.unsigned_portion(msg), msg.signature):
            return _reject(ev, "bad-signature")
        self.last_reply_ts = max(msg.t3, self.last_reply_ts or msg.t3)
        if not self._in_range(t4 - msg.t3):
            if self.bootstrap_followup and t4 <= self.pending.deadline and self._may_bootstrap():
                return self._bootstrap_step(ev, msg.t3, t4, msg.seq, data)
            self.pending = None
            self.last_measurement_at = t4
            alarm = self._alarm(t4, ALARM_DELAY, f"t4-t3={t4 - msg.t3}")
            return Decision(ev, "alarm", ALARM_DELAY, alarm=alarm)
        if t4 > self.pending.deadline:
            return self._late(ev, t4)
        est = round_half_away(Fraction((msg.t2 - msg.t1_echo) + (t4 - msg.t3), 2))
        self.path_delay = max(self.net.delta_min, min(self.net.delta_max, est))
        self._measurement_done(t4, msg.seq)
        return Decision(ev, "accepted", accepted=(bytes(data),))

    def handle_error_response(self, data: bytes, t_arr: int, first_measurement: bool | None = None) -> Decision:
        ev = "error-resp"
        try:
            msg = wire.decode(data)
        except wire.WireError as exc:
            return _reject(ev, exc.reason)
        if not isinstance(msg, wire.ErrorResp):
            return _reject(ev, "malformed")
        if self.pending is None:
            return _reject(ev, "unsolicited", "ignored")
        if msg.key_id != self.session_key_id or not self.scheme.verify(
            self.session_pk, wire.unsigned_portion(msg), msg.signature
        ):
            return _reject(ev, "bad-signature")
        if self.last_reply_ts is not None and msg.sender_timestamp <= self.last_reply_ts:
            return _reject(ev, "stale-reply")
        self.last_reply_ts = msg.sender_timestamp
        if t_arr > self.pending.deadline:
            return self._late(ev, t_arr)
        if first_measurement is None:
            first_measurement = self._may_bootstrap()
        if first_measurement:
            return self._bootstrap_step(ev, msg.sender_timestamp, t_arr, msg.seq, data)
        self.pending = None
        self.last_measurement_at = t_arr
        alarm = self._alarm(t_arr, ALARM_DELAY, "sender reported out-of-range delay")
        return Decision(ev, "alarm", ALARM_DELAY, alarm=alarm)
