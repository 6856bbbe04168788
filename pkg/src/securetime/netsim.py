"""Deterministic discrete-event network: one sender, N receivers, optional
transparent clocks, and an adversary interposed on every in-flight message.

Events run in ``(due, insertion counter)`` order, so a run is a pure function
of its configuration and seed.
"""

from __future__ import annotations

import csv
import hashlib
import heapq
import io
import random
from dataclasses import dataclass, field
from typing import Any, Iterable

from . import crypto, wire
from .clock import NetParams
from .crypto import KeyPair
from .receiver import Receiver
from .sender import MODE_1STEP, Sender

SENDER = "sender"
ADVERSARY = "adversary"

TRACE_COLUMNS = [
    "event_index",
    "true_time_ns",
    "node",
    "event_kind",
    "detail",
    "true_offset_ns",
    "applied_delta_ns",
    "alarm",
]


def derive_seed(seed: int, *labels: Any) -> int:
    text = "|".join([str(seed), *map(str, labels)]).encode()
    return int.from_bytes(hashlib.sha256(text).digest()[:8], "big")


def short_digest(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()[:16]


# -- adversary actions --------------------------------------------------------


@dataclass(frozen=True)
class InFlight:
    data: bytes
    src: str
    dst: str
    sent_at: int
    honest_delay: int
    origin: str = "honest"

    @property
    def kind(self) -> int | None:
        try:
            return wire.peek_kind(self.data)
        except wire.WireError:
            return None


@dataclass(frozen=True)
class Deliver:
    """Deliver the intercepted message; ``delay=None`` keeps the honest delay."""

    delay: int | None = None


@dataclass(frozen=True)
class Drop:
    pass


@dataclass(frozen=True)
class Store:
    tag: Any


@dataclass(frozen=True)
class Replay:
    tag: Any
    delay: int = 0
    dst: str | None = None


@dataclass(frozen=True)
class Inject:
    data: bytes
    dst: str
    delay: int = 0


@dataclass(frozen=True)
class Modify:
    data: bytes
    delay: int | None = None


@dataclass(frozen=True)
class Wake:
    delay: int
    token: Any = None


Action = Deliver | Drop | Store | Replay | Inject | Modify | Wake


class Adversary:
    """Pass-through base strategy. Subclasses override the hooks."""

    name = "passthrough"
    tick_interval: int | None = None

    def bind(self, world: "Simulation") -> None:
        self.world = world

    def on_message(self, msg: InFlight) -> list[Action]:
        return [Deliver()]

    def on_tick(self, now: int) -> list[Action]:
        return []

    def on_wake(self, token: Any, now: int) -> list[Action]:
        return []


# -- delay sampling -----------------------------------------------------------


@dataclass
class DelaySampler:
    """Seeded one-way delay sampler over [delta_min, delta_max]."""

    net: NetParams
    seed: int
    policy: str = "uniform"
    fixed: int | None = None
    _streams: dict = field(default_factory=dict, repr=False)

    def __post_init__(self) -> None:
        if self.policy not in ("uniform", "min", "max", "fixed"):
            raise ValueError(f"unknown delay policy {self.policy!r}")
        if self.policy == "fixed":
            if self.fixed is None or not self.net.delta_min <= self.fixed <= self.net.delta_max:
                raise ValueError("fixed delay must lie within [delta_min, delta_max]")

    def sample(self, src: str, dst: str, stream: str) -> int:
        if self.policy == "min":
            return self.net.delta_min
        if self.policy == "max":
            return self.net.delta_max
        if self.policy == "fixed":
            return self.fixed
        key = (src, dst, stream)
        rng = self._streams.get(key)
        if rng is None:
            rng = self._streams[key] = random.Random(derive_seed(self.seed, "delay", *key))
        return rng.randint(self.net.delta_min, self.net.delta_max)


def _stream(kind: int | None) -> str:
    if kind in (wire.KIND_SYNC1, wire.KIND_SYNC2):
        return "timing"
    if kind in (wire.KIND_DELAY_REQ, wire.KIND_DELAY_RESP, wire.KIND_ERROR):
        return "delay"
    if kind == wire.KIND_FOLLOWUP:
        return "followup"
    return "control"


# -- transparent clocks -------------------------------------------------------


@dataclass
class TransparentClockNode:
    name: str
    keypair: KeyPair
    residence: int | tuple[int, int] = 0
    scheme: str = "ed25519"
    seed: int = 0
    _residences: dict = field(default_factory=dict, repr=False)

    def __post_init__(self) -> None:
        self.tc_id = crypto.key_id(self.keypair.public)
        self._rng = random.Random(derive_seed(self.seed, "tc", self.name))

    def _draw(self) -> int:
        if isinstance(self.residence, tuple):
            return self._rng.randint(*self.residence)
        return self.residence

    def process_sync(self, sync_bytes: bytes) -> int:
        """Residence imposed on this SYNC; remembered for its FOLLOWUP."""
        msg = wire.decode(sync_bytes)
        r = self._draw()
        self._residences[(msg.key_id, msg.seq)] = r
        return r

    def residence_for_followup(self, followup_bytes: bytes) -> int | None:
        msg = wire.decode(followup_bytes)
        return self._residences.get((msg.key_id, msg.seq - 1))

    def amend_followup(self, followup_bytes: bytes, residence: int) -> bytes:
        """Append a signed residence block; the sender's signature is untouched."""
        msg = wire.decode(followup_bytes)
        signed = wire.signed_portion(followup_bytes, wire.KIND_FOLLOWUP)
        prior = wire.tc_blocks_bytes(followup_bytes)
        payload = wire.tc_signing_input(signed, prior, self.tc_id, residence)
        sig = crypto.sign(self.scheme, self.keypair.secret, payload)
        block = wire.TransparentClockBlock(self.tc_id, residence, sig)
        return wire.encode(wire.with_signature(
            wire.FollowUp(msg.key_id, msg.seq, msg.precise_origin_timestamp, msg.correction,
                          msg.link_hash, msg.tc_blocks + (block,)),
            msg.signature,
        ))


def tc_process(tc: TransparentClockNode, sync_bytes: bytes, followup_bytes: bytes) -> tuple[int, bytes]:
    """Hold the SYNC for its residence, then stamp that residence into the FOLLOWUP."""
    r = tc.process_sync(sync_bytes)
    return r, tc.amend_followup(followup_bytes, r)


# -- trace --------------------------------------------------------------------


@dataclass
class TraceRecord:
    index: int
    time: int
    node: str
    kind: str
    info: dict = field(default_factory=dict)
    true_offset: int | None = None
    delta: int | None = None
    alarm: str = ""

    def detail(self) -> str:
        return ";".join(f"{k}={v}" for k, v in self.info.items())

    def row(self) -> list:
        return [
            self.index,
            self.time,
            self.node,
            self.kind,
            self.detail(),
            "" if self.true_offset is None else self.true_offset,
            "" if self.delta is None else self.delta,
            self.alarm,
        ]


def _parse_detail(text: str) -> dict:
    out: dict = {}
    if not text:
        return out
    for part in text.split(";"):
        k, _, v = part.partition("=")
        out[k] = int(v) if v.lstrip("-").isdigit() else v
    return out


@dataclass
class Trace:
    records: list[TraceRecord] = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def add(self, time: int, node: str, kind: str, info: dict | None = None, **kw) -> TraceRecord:
        rec = TraceRecord(len(self.records), time, node, kind, info or {}, **kw)
        self.records.append(rec)
        return rec

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(TRACE_COLUMNS)
        for rec in self.records:
            w.writerow(rec.row())
        return buf.getvalue()

    def sha256(self) -> str:
        return hashlib.sha256(self.to_csv().encode()).hexdigest()

    @classmethod
    def from_csv(cls, text: str) -> "Trace":
        rows = list(csv.reader(io.StringIO(text)))
        if not rows or rows[0] != TRACE_COLUMNS:
            raise ValueError("not a trace CSV")
        trace = cls()
        for r in rows[1:]:
            trace.records.append(TraceRecord(
                int(r[0]), int(r[1]), r[2], r[3], _parse_detail(r[4]),
                int(r[5]) if r[5] else None, int(r[6]) if r[6] else None, r[7],
            ))
        return trace


# -- simulation ---------------------------------------------------------------


@dataclass
class SimConfig:
    net: NetParams
    mode: str = MODE_1STEP
    scheme: str = "ed25519"
    sync_interval: int = 1_000_000_000
    announce_interval: int | None = None
    followup_delay: int = 1_000_000
    horizon: int = 60_000_000_000
    start: int = 100_000_000_000
    seed: int = 0
    stop_on_alarm: bool = False
    max_consecutive_drops: int | None = None
    rotation_threshold: int = wire.ROTATION_THRESHOLD
    nonce_space: int = 2 ** 128


@dataclass(order=True)
class _Event:
    due: int
    seq_no: int
    action: tuple = field(compare=False)


class Simulation:
    """Wire a sender, receivers, TCs and an adversary; ``run()`` returns a Trace.

    The adversary sees every in-flight message once (per hop) and may read
    any node's state through this object; it never receives private keys
    beyond what a scenario grants it explicitly.
    """

    def __init__(
        self,
        config: SimConfig,
        sender: Sender,
        receivers: dict[str, Receiver],
        adversary: Adversary | None = None,
        *,
        sampler: DelaySampler | None = None,
        tcs: Iterable[TransparentClockNode] = (),
    ) -> None:
        self.config = config
        self.net = config.net
        self.sender = sender
        self.receivers = dict(receivers)
        self.tcs = list(tcs)
        self.tc_by_name = {tc.name: tc for tc in self.tcs}
        self.adversary = adversary or Adversary()
        self.sampler = sampler or DelaySampler(config.net, config.seed)
        self.trace = Trace()
        self.now = config.start
        self.end = config.start + config.horizon
        self.sender_rng = random.Random(derive_seed(config.seed, "sender"))
        self.adversary_rng = random.Random(derive_seed(config.seed, "adversary"))
        self.emitted: dict[str, int] = {}
        self.session_index: dict[bytes, int] = {}
        self.delivered_honest_delays: list[int] = []
        self.adversarial_events = 0
        self._queue: list[_Event] = []
        self._counter = 0
        self._store: dict[Any, InFlight] = {}
        self._tick_gen: dict[str, int] = {}
        self._tick_plan: dict[str, tuple] = {}
        self._drops: dict[tuple[str, str], int] = {}
        self._last_timing_due: dict[tuple[str, str], int] = {}
        self._tc_release: dict[tuple[str, bytes, int], int] = {}
        self._name_by_id = {r.receiver_id: name for name, r in self.receivers.items()}
        self._stopped = False
        for name, r in self.receivers.items():
            sender.register_receiver(r.receiver_id, r.own_keypair.public)
        self.adversary.bind(self)

    # -- world view for adversaries ------------------------------------------

    def local_time(self, name: str, true_time: int | None = None) -> int:
        return self.receivers[name].clock.read(self.now if true_time is None else true_time)

    def true_offset(self, name: str) -> int:
        return self.receivers[name].clock.true_offset(self.now)

    # -- scheduling -----------------------------------------------------------

    def _push(self, due: int, *action) -> None:
        heapq.heappush(self._queue, _Event(due, self._counter, action))
        self._counter += 1

    def _record_emission(self, node: str, data: bytes, info: dict | None = None) -> str:
        d = short_digest(data)
        self.emitted.setdefault(d, self.now)
        kind = wire.peek_kind(data)
        det = {"msg": kind, "dig": d}
        try:
            msg = wire.decode(data)
            det["seq"] = msg.seq
            if node == SENDER or node in self.tc_by_name:
                sess = self.session_index.setdefault(msg.key_id, len(self.session_index))
                if kind != wire.KIND_DELAY_REQ:
                    det["sess"] = sess
        except wire.WireError:
            pass
        det.update(info or {})
        self.trace.add(self.now, node, "emit", det)
        return d

    def _multicast_first_hops(self) -> list[str]:
        if self.tcs:
            return [self.tcs[0].name]
        return list(self.receivers)

    def _send(self, src: str, dst: str, data: bytes) -> None:
        """Route one honest hop through the adversary."""
        kind = wire.peek_kind(data)
        if src in self.tc_by_name or (src == SENDER and dst in self.tc_by_name):
            # TC links are colocated: the downstream link owns the delay,
            # except for the last TC hop which samples the real link.
            honest = 0 if dst in self.tc_by_name else self.sampler.sample(SENDER, dst, _stream(kind))
        else:
            honest = self.sampler.sample(src, dst, _stream(kind))
        msg = InFlight(bytes(data), src, dst, self.now, honest)
        actions = self.adversary.on_message(msg)
        self._execute(actions, msg)

    def _execute(self, actions: list[Action], msg: InFlight | None) -> None:
        summary = []
        for act in actions:
            if isinstance(act, Drop) and msg is not None:
                link = (msg.src, msg.dst)
                cap = self.config.max_consecutive_drops
                if cap is not None and self._drops.get(link, 0) >= cap:
                    act = Deliver()
                    summary.append("drop-capped")
                else:
                    self._drops[link] = self._drops.get(link, 0) + 1
                    summary.append("drop")
                    continue
            if isinstance(act, Deliver) and msg is not None:
                self._drops[(msg.src, msg.dst)] = 0
                delay = msg.honest_delay if act.delay is None else act.delay
                due = self.now + max(0, delay)
                if act.delay is None:
                    due = self._fifo(msg, due)
                    self.delivered_honest_delays.append(due - self.now)
                self._push(due, "deliver", msg.dst, msg.data, msg.origin, msg.src)
                summary.append(f"deliver+{due - self.now}")
            elif isinstance(act, Store) and msg is not None:
                self._store[act.tag] = msg
            elif isinstance(act, Replay):
                stored = self._store.get(act.tag)
                if stored is not None:
                    self.adversarial_events += 1
                    self._push(self.now + max(0, act.delay), "deliver", act.dst or stored.dst,
                               stored.data, "replay", ADVERSARY)
                    summary.append("replay")
            elif isinstance(act, Inject):
                self.adversarial_events += 1
                self._push(self.now + max(0, act.delay), "deliver", act.dst, bytes(act.data), "inject", ADVERSARY)
                summary.append("inject")
            elif isinstance(act, Modify) and msg is not None:
                self.adversarial_events += 1
                delay = msg.honest_delay if act.delay is None else act.delay
                self._push(self.now + max(0, delay), "deliver", msg.dst, bytes(act.data), "modify", msg.src)
                summary.append("modify")
            elif isinstance(act, Wake):
                self._push(self.now + max(0, act.delay), "adv-wake", act.token)
        if msg is not None and summary != [f"deliver+{msg.honest_delay}"]:
            self.trace.add(self.now, ADVERSARY, "mediate",
                           {"src": msg.src, "dst": msg.dst, "dig": short_digest(msg.data),
                            "act": ",".join(summary) or "none"})
        elif msg is None and summary:
            self.trace.add(self.now, ADVERSARY, "act", {"act": ",".join(summary)})

    def _fifo(self, msg: InFlight, due: int) -> int:
        kind = msg.kind
        link = (msg.src, msg.dst)
        if kind in (wire.KIND_SYNC1, wire.KIND_SYNC2):
            self._last_timing_due[link] = due
        elif kind == wire.KIND_FOLLOWUP and link in self._last_timing_due:
            due = max(due, self._last_timing_due[link] + 1)
        return due

    def _schedule_tick(self, name: str) -> None:
        r = self.receivers[name]
        wake = r.next_wakeup()
        plan = (self._tick_gen.get(name, 0), wake, r.clock.offset, r.clock.drift)
        if self._tick_plan.get(name) == plan:
            return  # the pending tick is still exact
        gen = self._tick_gen.get(name, 0) + 1
        self._tick_gen[name] = gen
        self._tick_plan.pop(name, None)
        if wake is None:
            return
        due = max(self.now, r.clock.true_time_at(wake)) if wake > r.clock.read(self.now) else self.now
        self._push(due, "tick", name, gen)
        self._tick_plan[name] = (gen, wake, r.clock.offset, r.clock.drift)

    # -- sender side ------------------------------------------------------

    def _multicast(self, data: bytes, info: dict | None = None) -> None:
        self._record_emission(SENDER, data, info)
        for hop in self._multicast_first_hops():
            self._send(SENDER, hop, data)

    def _maybe_rotate(self, needed: int) -> None:
        ann = self.sender.maybe_rotate_session(self.sender_rng, needed)
        if ann is not None:
            self._multicast(wire.encode(ann), {"rotate": 1})

    def _on_sync(self) -> None:
        cfg = self.config
        if self.sender.mode == MODE_1STEP:
            self._maybe_rotate(1)
            self._multicast(wire.encode(self.sender.emit_sync_1step(self.now)))
        else:
            self._maybe_rotate(2)
            sync = self.sender.emit_sync_2step(self.sender_rng)
            self._multicast(wire.encode(sync))
            self._push(self.now + cfg.followup_delay, "followup", self.sender.pending, self.now)
        self._push(self.now + cfg.sync_interval, "sync")

    def _on_followup(self, pending, send_time: int) -> None:
        if self.sender.pending is not pending:
            return
        fu = self.sender.emit_followup(send_time, pending)
        self._multicast(wire.encode(fu))

    def _on_sender_delivery(self, data: bytes) -> None:
        reply = self.sender.handle_delay_request(data, self.now)
        if reply is None:
            self.trace.add(self.now, SENDER, "delay-req", {"verdict": "dropped"})
            return
        req = wire.decode(data)
        dst = self._name_by_id.get(req.receiver_id)
        if dst is None:
            return
        out = wire.encode(reply)
        self._record_emission(SENDER, out, {"to": dst})
        self._send(SENDER, dst, out)

    # -- TC side ----------------------------------------------------------

    def _on_tc_delivery(self, name: str, data: bytes) -> None:
        tc = self.tc_by_name[name]
        idx = self.tcs.index(tc)
        nexts = [self.tcs[idx + 1].name] if idx + 1 < len(self.tcs) else list(self.receivers)
        try:
            kind = wire.peek_kind(data)
            msg = wire.decode(data)
        except wire.WireError:
            kind, msg = None, None
        release = self.now
        if kind in (wire.KIND_SYNC1, wire.KIND_SYNC2):
            r = tc.process_sync(data)
            release = self.now + r
            self._tc_release[(name, msg.key_id, msg.seq)] = release
        elif kind == wire.KIND_FOLLOWUP:
            r = tc.residence_for_followup(data)
            if r is not None:
                data = tc.amend_followup(data, r)
                release = max(self.now, self._tc_release.get((name, msg.key_id, msg.seq - 1), self.now))
                self._record_emission(name, data, {"residence": r})
        self._push(release, "tc-forward", name, data, tuple(nexts))

    # -- receiver side ----------------------------------------------------

    def _on_receiver_delivery(self, name: str, data: bytes, origin: str) -> None:
        r = self.receivers[name]
        t_arr = r.clock.read(self.now)
        dec = r.handle(data, t_arr)
        d = short_digest(data)
        info = {"verdict": dec.verdict, "dig": d, "origin": origin}
        if dec.reason:
            info["reason"] = dec.reason
        if dec.verdict == "buffered":
            self._buffer_arrivals[(name, d)] = self.now
        if dec.accepted:
            parts = []
            for b in dec.accepted:
                bd = short_digest(b)
                parts.append(f"{bd}@{self._buffer_arrivals.get((name, bd), self.now)}")
            info["acc"] = ",".join(parts)
        if dec.raw_offset is not None:
            info["raw"] = dec.raw_offset
            info["clamped"] = int(dec.clamped)
        self._record_receiver(name, dec, info)
        self._schedule_tick(name)

    def _record_receiver(self, name: str, dec, info: dict) -> None:
        r = self.receivers[name]
        if r.synchronized:
            info["sync"] = 1
        self.trace.add(
            self.now, name, dec.event, info,
            true_offset=r.clock.true_offset(self.now),
            delta=dec.delta if (dec.verdict in ("accepted", "bootstrap") and dec.event != "announce") else None,
            alarm=dec.alarm.kind if dec.alarm else "",
        )
        if dec.alarm and self.config.stop_on_alarm:
            self._stopped = True

    def _on_tick(self, name: str, gen: int) -> None:
        if self._tick_gen.get(name) != gen:
            return
        self._tick_plan.pop(name, None)
        r = self.receivers[name]
        dec = r.tick(r.clock.read(self.now))
        if dec is not None:
            self._record_receiver(name, dec, {"verdict": dec.verdict, **({"reason": dec.reason} if dec.reason else {})})
            if dec.outgoing is not None:
                self._record_emission(name, dec.outgoing)
                self._send(name, SENDER, dec.outgoing)
            self._schedule_tick(name)
        else:
            # Woke marginally early (clock stepped meanwhile); retry shortly.
            self._tick_gen[name] = gen + 1
            nxt = r.next_wakeup()
            if nxt is not None:
                due = max(self.now + 1, r.clock.true_time_at(nxt))
                self._push(due, "tick", name, gen + 1)

    # -- main loop --------------------------------------------------------

    def run(self) -> Trace:
        cfg = self.config
        self._buffer_arrivals: dict[tuple[str, str], int] = {}
        self.trace.meta.update(seed=cfg.seed, mode=self.sender.mode)
        for name, r in self.receivers.items():
            r.start(r.clock.read(self.now))
            self.trace.add(self.now, name, "start", {"drift_ppb": int(r.clock.drift * 10**9)},
                           true_offset=r.clock.true_offset(self.now))
        ann = self.sender.start_session(self.sender_rng)
        self._multicast(wire.encode(ann))
        self._push(self.now + self.sender.announce_interval, "announce")
        self._push(self.now + max(1, cfg.sync_interval // 2), "sync")
        if self.adversary.tick_interval:
            self._push(self.now + self.adversary.tick_interval, "adv-tick")
        reason = "horizon"
        while self._queue:
            ev = heapq.heappop(self._queue)
            if ev.due > self.end:
                break
            self.now = ev.due
            self._dispatch(ev.action)
            if self._stopped:
                reason = "alarm"
                break
        self.now = min(self.now, self.end) if reason == "horizon" else self.now
        self.trace.add(self.now, "sim", "end", {"reason": reason, "adv_events": self.adversarial_events})
        return self.trace

    def _dispatch(self, action: tuple) -> None:
        tag = action[0]
        if tag == "deliver":
            _, dst, data, origin, src = action
            if dst == SENDER:
                self._on_sender_delivery(data)
            elif dst in self.tc_by_name:
                self._on_tc_delivery(dst, data)
            elif dst in self.receivers:
                self._on_receiver_delivery(dst, data, origin)
        elif tag == "tc-forward":
            _, name, data, nexts = action
            for n in nexts:
                self._send(name, n, data)
        elif tag == "sync":
            self._on_sync()
        elif tag == "followup":
            self._on_followup(action[1], action[2])
        elif tag == "announce":
            self._multicast(self.sender.session.announce_bytes, {"reannounce": 1})
            self._push(self.now + self.sender.announce_interval, "announce")
        elif tag == "tick":
            self._on_tick(action[1], action[2])
        elif tag == "adv-tick":
            self._execute(self.adversary.on_tick(self.now), None)
            self._push(self.now + self.adversary.tick_interval, "adv-tick")
        elif tag == "adv-wake":
            self._execute(self.adversary.on_wake(action[1], self.now), None)
