"""Concrete attack strategies plugged into the simulator's mediation hook."""

from __future__ import annotations

import itertools
from typing import Any

from . import wire
from .netsim import (
    SENDER,
    Action,
    Adversary,
    Deliver,
    Drop,
    InFlight,
    Inject,
    Modify,
    Replay,
    Store,
)

STRATEGIES: dict[str, type[Adversary]] = {}


def strategy(name: str):
    def register(cls):
        cls.name = name
        STRATEGIES[name] = cls
        return cls
    return register


def make_adversary(kind: str, **params: Any) -> Adversary:
    try:
        cls = STRATEGIES[kind]
    except KeyError:
        raise ValueError(f"unknown adversary strategy {kind!r}") from None
    return cls(**params)


strategy("passthrough")(type("Passthrough", (Adversary,), {}))


def flip_bit(data: bytes, bit: int) -> bytes:
    out = bytearray(data)
    out[bit // 8] ^= 1 << (bit % 8)
    return bytes(out)


@strategy("bitflip")
class BitFlip(Adversary):
    """Flip one random bit in the signed portion of each signed message.

    With ``keep_original`` the untouched message is delivered as well, so
    the protocol keeps running while every forged copy gets tested.
    ``flip_unsigned`` also flips a nonce bit in unsigned SYNCs.
    """

    def __init__(self, keep_original: bool = True, flip_unsigned: bool = False, copies: int = 1) -> None:
        self.keep_original = keep_original
        self.flip_unsigned = flip_unsigned
        self.copies = copies
        self.flipped = 0

    def on_message(self, msg: InFlight) -> list[Action]:
        rng = self.world.adversary_rng
        kind = msg.kind
        if kind is None:
            return [Deliver()]
        if kind == wire.KIND_SYNC2:
            if not self.flip_unsigned:
                return [Deliver()]
            lo, hi = wire.HEADER_LEN * 8, len(msg.data) * 8
        else:
            lo, hi = 0, len(wire.signed_portion(msg.data)) * 8
        acts: list[Action] = []
        for _ in range(self.copies):
            # Forged copy overtakes the original by a hair.
            acts.append(Modify(flip_bit(msg.data, rng.randrange(lo, hi)), max(0, msg.honest_delay - 1)))
            self.flipped += 1
        if self.keep_original:
            acts.append(Deliver())
        return acts


@strategy("replay")
class ReplayAttack(Adversary):
    """Deliver every message, then replay a stored copy after a lag."""

    def __init__(self, lags: tuple[int, ...] = (1_000, 3_000_000, 1_500_000_000), copies: int = 1) -> None:
        self.lags = tuple(lags)
        self.copies = copies
        self._tags = itertools.count()

    def on_message(self, msg: InFlight) -> list[Action]:
        tag = next(self._tags)
        acts: list[Action] = [Deliver(), Store(tag)]
        for _ in range(self.copies):
            lag = self.world.adversary_rng.choice(self.lags)
            acts.append(Replay(tag, msg.honest_delay + lag))
        return acts


@strategy("cross-session-replay")
class CrossSessionReplay(Adversary):
    """Record each session's traffic; after every rotation replay all of it."""

    def __init__(self, max_per_rotation: int | None = None, spacing: int = 1_000) -> None:
        self.max_per_rotation = max_per_rotation
        self.spacing = spacing
        self.by_session: dict[bytes, list[tuple[int, str]]] = {}
        self.current: bytes | None = None
        self._tags = itertools.count()
        self.replayed = 0

    def on_message(self, msg: InFlight) -> list[Action]:
        acts: list[Action] = [Deliver()]
        if msg.src == SENDER or msg.dst != SENDER:
            try:
                decoded = wire.decode(msg.data)
            except wire.WireError:
                return acts
            kid = decoded.key_id
            if isinstance(decoded, wire.SessionAnnounce) and kid != self.current:
                old = [m for k, msgs in self.by_session.items() if k != kid for m in msgs]
                if self.max_per_rotation is not None:
                    old = old[-self.max_per_rotation:]
                for i, (tag, dst) in enumerate(old):
                    if dst == msg.dst:
                        acts.append(Replay(tag, msg.honest_delay + (i + 1) * self.spacing))
                        self.replayed += 1
                self.current = kid
            if msg.src == SENDER:
                tag = next(self._tags)
                acts.append(Store(tag))
                self.by_session.setdefault(kid, []).append((tag, msg.dst))
        return acts


@strategy("request-drop")
class RequestDrop(Adversary):
    """Drop the target's delay requests (optionally only after ``after`` passes)."""

    def __init__(self, target: str | None = None, after: int = 0) -> None:
        self.target = target
        self.after = after
        self.seen = 0

    def on_message(self, msg: InFlight) -> list[Action]:
        target = self.target or next(iter(self.world.receivers))
        if msg.src == target and msg.kind == wire.KIND_DELAY_REQ:
            self.seen += 1
            if self.seen > self.after:
                return [Drop()]
        return [Deliver()]


@strategy("optimal-delay")
class OptimalDelay(Adversary):
    """Omniscient delay attacker probing the unnoticed and detection ceilings.

    The attacker reads the target's true offset and state. It steers the
    offset negative (receiver behind) as far as the correction clamp lets it
    while guaranteeing the offset is back within the window that passes the
    sender's check at the next delay request. Delay requests and responses
    are timed to pass both range checks while maximising the path-delay
    estimate. A cold-start error response is held back to the timeout so
    the bootstrap step lands as far behind as possible; against a receiver
    that re-measures right after bootstrapping it lands one spread behind,
    the deepest offset that follow-up still passes.

    In ``detect`` mode the steering stops reverting after ``detect_after``
    completed measurements, which forces an alarm.
    """

    def __init__(self, target: str | None = None, mode: str = "unnoticed", detect_after: int = 2,
                 margin: int | None = None) -> None:
        if mode not in ("unnoticed", "detect"):
            raise ValueError("optimal-delay mode must be 'unnoticed' or 'detect'")
        self.target = target
        self.mode = mode
        self.detect_after = detect_after
        self.margin = margin
        self.measurements = 0
        self._last_sync_delay = 0

    def bind(self, world) -> None:
        super().bind(world)
        self.target = self.target or next(iter(world.receivers))
        net = world.net
        quantum = int(world.config.sync_interval * net.rho_max)
        self.m = self.margin if self.margin is not None else max(200, 2 * quantum)

    @property
    def _r(self):
        return self.world.receivers[self.target]

    def _detecting(self) -> bool:
        return self.mode == "detect" and self.measurements >= self.detect_after

    def _next_request_local(self) -> int | None:
        r, net = self._r, self.world.net
        if r.pending is not None:
            return r.pending.t1 + 2 * net.delta_max - self.m + r.measurement_interval
        if r.last_measurement_at is None:
            return None
        return r.next_measurement_at()

    def _push_down(self, delay: int) -> bool:
        """Can the clock be pushed down once more and still recover in time?"""
        if self._detecting():
            return True
        r, net, w = self._r, self.world.net, self.world
        t_next = self._next_request_local()
        if t_next is None:
            return False
        arrive = w.local_time(self.target) + delay
        rho = net.rho_max
        step = int((arrive - r.t_last) * rho)
        floor = -net.spread + self.m
        slack = 2 * int(w.config.sync_interval * rho)
        # Drift is known to this attacker; it adds to (or eats) the clamp budget.
        recover = int((t_next - arrive) * (rho + r.clock.drift)) - slack
        return w.true_offset(self.target) - step + recover >= floor

    def _sync_delay(self) -> int:
        r, net, w = self._r, self.world.net, self.world
        dmin = net.delta_min
        off = w.true_offset(self.target)
        down_delay = max(dmin, r.path_delay - off + 2 * int(w.config.sync_interval * net.rho_max) + self.m)
        if r.synchronized and self._push_down(down_delay):
            return down_delay
        return dmin

    def on_message(self, msg: InFlight) -> list[Action]:
        tgt, w, net = self.target, self.world, self.world.net
        kind = msg.kind
        if msg.dst != tgt and msg.src != tgt:
            return [Deliver()]
        off = w.true_offset(tgt)
        r = self._r
        if kind in (wire.KIND_SYNC1, wire.KIND_SYNC2):
            self._last_sync_delay = self._sync_delay()
            return [Deliver(self._last_sync_delay)]
        if kind == wire.KIND_FOLLOWUP:
            return [Deliver(max(net.delta_min, self._last_sync_delay - w.config.followup_delay + 1))]
        if kind == wire.KIND_DELAY_REQ:
            a = net.delta_max + off - self.m
            return [Deliver(max(net.delta_min, a))]
        if kind == wire.KIND_DELAY_RESP:
            self.measurements += 1
            return [Deliver(max(net.delta_min, net.delta_max - off - self.m))]
        if kind == wire.KIND_ERROR and r.pending is not None:
            latest = r.pending.deadline - w.local_time(tgt) - self.m
            if r.bootstrap_followup:
                latest = min(net.delta_max - self.m, latest)
            return [Deliver(max(net.delta_min, latest))]
        return [Deliver()]


@strategy("preplay-flood")
class PreplayFlood(Adversary):
    """Flood guessed 2-step SYNCs ahead of the real one and drop the real one.

    Guesses are distinct and exclude every nonce already observed in the
    session. ``trials`` records, per FOLLOWUP, how many forged SYNCs sat in
    the target's buffer and how many nonces the session had used before it.
    """

    def __init__(self, k: int = 64, target: str | None = None, nonce_space: int = 2 ** 128) -> None:
        self.k = k
        self.target = target
        self.nonce_space = nonce_space
        self.key_id: bytes | None = None
        self.next_seq: int | None = None
        self.used: set[int] = set()
        self.trials: list[tuple[int, int, int]] = []
        self.injected_for: set[int] = set()

    def bind(self, world) -> None:
        super().bind(world)
        self.target = self.target or next(iter(world.receivers))

    def _guesses(self) -> list[int]:
        rng = self.world.adversary_rng
        out: set[int] = set()
        want = min(self.k, self.nonce_space - len(self.used))
        while len(out) < want:
            g = rng.randrange(self.nonce_space)
            if g not in self.used:
                out.add(g)
        return sorted(out)

    def _flood(self, seq: int, delay: int) -> list[Action]:
        self.injected_for.add(seq)
        return [Inject(wire.encode(wire.Sync2Step(self.key_id, seq, g.to_bytes(wire.NONCE_LEN, "big"))), self.target, delay)
                for g in self._guesses()]

    def on_message(self, msg: InFlight) -> list[Action]:
        kind = msg.kind
        if msg.src != SENDER or msg.dst != self.target:
            return [Deliver()]
        if kind == wire.KIND_ANNOUNCE:
            ann = wire.decode(msg.data)
            if ann.key_id != self.key_id:
                self.key_id, self.used, self.next_seq = ann.key_id, set(), ann.seq
        elif kind == wire.KIND_SYNC2:
            sync = wire.decode(msg.data)
            self.used.add(int.from_bytes(sync.nonce, "big"))
            return [Drop()]
        elif kind == wire.KIND_FOLLOWUP:
            fu = wire.decode(msg.data)
            if fu.seq - 1 in self.injected_for:
                r = self.world.receivers[self.target]
                buffered = sum(1 for b in r.sync_buffer if b.seq == fu.seq - 1)
                self.trials.append((fu.seq, buffered, len(self.used) - 1))
            # The next SYNC carries seq + 1. Flood right after this FOLLOWUP lands,
            # so its verdict frees the buffer first.
            self.next_seq = fu.seq + 1
            if fu.key_id == self.key_id:
                return [Deliver(), *self._flood(self.next_seq, msg.honest_delay + 1)]
        elif kind == wire.KIND_SYNC1:
            return [Drop()]
        return [Deliver()]
        if kind == wire.KIND_ANNOUNCE:
            ann = wire.decode(msg.data)
            if ann.key_id != self.key_id:
                self.key_id, self.used, self.next_seq = ann.key_id, set(), ann.seq
        elif kind == wire.KIND_SYNC2:
            sync = wire.decode(msg.data)
            self.used.add(int.from_bytes(sync.nonce, "big"))
            return [Drop()]
        elif kind == wire.KIND_FOLLOWUP:
            fu = wire.decode(msg.data)
            self.next_seq = fu.seq + 1
            if fu.seq - 1 in self.injected_for:
                r = self.world.receivers[self.target]
                buffered = sum(1 for b in r.sync_buffer if b.seq == fu.seq - 1)
                self.trials.append((fu.seq, buffered, len(self.used) - 1))
        elif kind == wire.KIND_SYNC1:
            return [Drop()]
        return [Deliver()]
