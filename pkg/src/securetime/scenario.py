"""Flat key=value scenario files and the builder that turns one into a Simulation.

Example::

    name = optimal-5ms
    delta_min = 0
    delta_max = 5ms
    rho_max = 100ppm
    mode = 1-step
    receivers = 1
    drift = 0ppm
    initial_offset = -1s
    sync_interval = 1s
    horizon = 20 intervals
    adversary = optimal-delay
    adversary.mode = unnoticed

Lines starting with ``#`` are comments. Durations take ns/us/ms/s suffixes
(bare integers are nanoseconds), rates take ppm/ppb. ``horizon`` may also be
given as a multiple of the receiver's measurement interval.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Any

from . import crypto, wire
from .adversary import STRATEGIES, make_adversary
from .clock import ConfigError, NetParams, SimClock
from .netsim import DelaySampler, SimConfig, Simulation, TransparentClockNode, derive_seed
from .receiver import DEFAULT_BUFFER, Receiver
from .sender import MODE_1STEP, MODE_2STEP, NONCE_SPACE_FULL, Sender
from .units import US, parse_duration, parse_rate

_BOOL = {"true": True, "yes": True, "on": True, "1": True, "false": False, "no": False, "off": False, "0": False}


@dataclass
class Scenario:
    net: NetParams
    name: str = "scenario"
    mode: str = MODE_1STEP
    scheme: str = "ed25519"
    receivers: int = 1
    drift: tuple[Fraction, ...] = (Fraction(0),)
    initial_offset: tuple[int, ...] = (0,)
    sync_interval: int = 1_000_000_000
    announce_interval: int | None = None
    followup_delay: int = 1_000_000
    horizon: int = 60_000_000_000
    seed: int = 0
    adversary: str = "passthrough"
    adversary_params: dict[str, Any] = field(default_factory=dict)
    tc_residences: tuple[int | tuple[int, int], ...] = ()
    trust_tc: bool = True
    bootstrap: bool = True
    bootstrap_followup: bool = False
    buffer: int = DEFAULT_BUFFER
    nonce_space: int = NONCE_SPACE_FULL
    rotation_threshold: int = wire.ROTATION_THRESHOLD
    delay_policy: str = "uniform"
    delay_fixed: int | None = None
    max_consecutive_drops: int | None = None
    stop_on_alarm: bool = False
    tick: int = US

    def __post_init__(self) -> None:
        self.validate()

    def validate(self) -> None:
        if self.mode not in (MODE_1STEP, MODE_2STEP):
            raise ConfigError(f"mode must be {MODE_1STEP} or {MODE_2STEP}, got {self.mode!r}")
        if self.scheme not in crypto.SCHEMES:
            raise ConfigError(f"unknown scheme {self.scheme!r}")
        if self.receivers < 1:
            raise ConfigError("need at least one receiver")
        for d in self.drift:
            if abs(d) > self.net.rho_max:
                raise ConfigError(f"drift {d} exceeds rho_max {self.net.rho_max}")
        if len(self.drift) not in (1, self.receivers) or len(self.initial_offset) not in (1, self.receivers):
            raise ConfigError("drift and initial_offset need one value or one per receiver")
        if self.sync_interval <= 0 or self.horizon <= 0 or self.tick <= 0:
            raise ConfigError("sync_interval, horizon and tick must be positive")
        if self.mode == MODE_2STEP and not 0 < self.followup_delay < self.sync_interval:
            raise ConfigError("followup_delay must lie strictly inside the sync interval")
        if self.adversary not in STRATEGIES:
            raise ConfigError(f"unknown adversary {self.adversary!r}; known: {', '.join(sorted(STRATEGIES))}")
        if self.tc_residences and self.mode != MODE_2STEP:
            raise ConfigError("transparent clocks require 2-step mode")
        if self.buffer < 1:
            raise ConfigError("buffer must be at least 1")
        if not 1 <= self.nonce_space <= NONCE_SPACE_FULL:
            raise ConfigError("nonce_space out of range")
        if not 2 <= self.rotation_threshold <= wire.ROTATION_THRESHOLD:
            raise ConfigError("rotation_threshold out of range")
        if self.delay_policy not in ("uniform", "min", "max", "fixed"):
            raise ConfigError(f"unknown delay_policy {self.delay_policy!r}")
        if self.delay_policy == "fixed" and (
            self.delay_fixed is None or not self.net.delta_min <= self.delay_fixed <= self.net.delta_max
        ):
            raise ConfigError("delay_policy=fixed needs delay_fixed within [delta_min, delta_max]")

    def per_receiver(self, values: tuple, i: int):
        return values[0] if len(values) == 1 else values[i]

    def with_seed(self, seed: int) -> "Scenario":
        return replace(self, seed=seed)


def _parse_bool(key: str, v: str) -> bool:
    try:
        return _BOOL[v.lower()]
    except KeyError:
        raise ConfigError(f"{key}: expected a boolean, got {v!r}") from None


def _parse_int(key: str, v: str) -> int:
    v = v.replace("_", "")
    try:
        if "^" in v:
            base, _, exp = v.partition("^")
            return int(base) ** int(exp)
        return int(v)
    except ValueError:
        raise ConfigError(f"{key}: expected an integer, got {v!r}") from None


def _dur(key: str, v: str) -> int:
    try:
        return parse_duration(v)
    except ValueError as exc:
        raise ConfigError(f"{key}: {exc}") from None


def _residence(key: str, v: str) -> int | tuple[int, int]:
    if "-" in v.strip()[1:]:
        lo, _, hi = v.partition("-")
        lo_ns, hi_ns = _dur(key, lo), _dur(key, hi)
        if lo_ns > hi_ns:
            raise ConfigError(f"{key}: empty residence range {v!r}")
        return (lo_ns, hi_ns)
    return _dur(key, v)


def _adversary_value(v: str) -> Any:
    low = v.lower()
    if low in ("true", "false"):
        return low == "true"
    if "," in v:
        return tuple(_adversary_value(p.strip()) for p in v.split(",") if p.strip())
    for conv in (lambda s: _parse_int("", s), parse_duration):
        try:
            return conv(v)
        except (ConfigError, ValueError):
            pass
    return v


def parse_scenario(text: str) -> Scenario:
    raw: dict[str, str] = {}
    adv: dict[str, Any] = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value")
        key, _, value = (s.strip() for s in line.partition("="))
        if key.startswith("adversary."):
            adv[key[len("adversary."):]] = _adversary_value(value)
        elif key in raw:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        else:
            raw[key] = value

    def take(key, conv, default=None):
        if key in raw:
            return conv(key, raw.pop(key))
        return default

    for key in ("delta_min", "delta_max", "rho_max"):
        if key not in raw:
            raise ConfigError(f"missing required key {key!r}")
    try:
        net = NetParams(take("delta_min", _dur), take("delta_max", _dur), take("rho_max", _rate))
    except ValueError as exc:
        raise ConfigError(str(exc)) from None

    horizon_raw = raw.pop("horizon", "60s")
    kw: dict[str, Any] = dict(
        net=net,
        name=take("name", lambda k, v: v, "scenario"),
        mode=take("mode", lambda k, v: v, MODE_1STEP),
        scheme=take("scheme", lambda k, v: v, "ed25519"),
        receivers=take("receivers", _parse_int, 1),
        drift=take("drift", lambda k, v: tuple(_rate(k, p.strip()) for p in v.split(",")), (Fraction(0),)),
        initial_offset=take("initial_offset", lambda k, v: tuple(_dur(k, p.strip()) for p in v.split(",")), (0,)),
        sync_interval=take("sync_interval", _dur, 1_000_000_000),
        announce_interval=take("announce_interval", _dur),
        followup_delay=take("followup_delay", _dur, 1_000_000),
        seed=take("seed", _parse_int, 0),
        adversary=take("adversary", lambda k, v: v, "passthrough"),
        adversary_params=adv,
        tc_residences=take("tc", lambda k, v: tuple(_residence(k, p.strip()) for p in v.split(",")), ()),
        trust_tc=take("trust_tc", _parse_bool, True),
        bootstrap=take("bootstrap", _parse_bool, True),
        bootstrap_followup=take("bootstrap_followup", _parse_bool, False),
        buffer=take("buffer", _parse_int, DEFAULT_BUFFER),
        nonce_space=take("nonce_space", _parse_int, NONCE_SPACE_FULL),
        rotation_threshold=take("rotation_threshold", _parse_int, wire.ROTATION_THRESHOLD),
        delay_policy=take("delay_policy", lambda k, v: v, "uniform"),
        delay_fixed=take("delay_fixed", _dur),
        max_consecutive_drops=take("max_consecutive_drops", _parse_int),
        stop_on_alarm=take("stop_on_alarm", _parse_bool, False),
        tick=take("tick", _dur, US),
    )
    if raw:
        raise ConfigError(f"unknown keys: {', '.join(sorted(raw))}")
    kw["horizon"] = _horizon(horizon_raw, net)
    return Scenario(**kw)


def _rate(key: str, v: str) -> Fraction:
    try:
        return parse_rate(v)
    except ValueError as exc:
        raise ConfigError(f"{key}: {exc}") from None


def _horizon(v: str, net: NetParams) -> int:
    parts = v.split()
    if len(parts) == 2 and parts[1] in ("intervals", "interval"):
        return _parse_int("horizon", parts[0]) * net.measurement_interval
    return _dur("horizon", v)


def load_scenario(path: str) -> Scenario:
    with open(path, encoding="utf-8") as fh:
        return parse_scenario(fh.read())


def build_simulation(sc: Scenario) -> Simulation:
    """Instantiate every node from the scenario; keys derive from the seed."""
    def keypair(*labels) -> crypto.KeyPair:
        seed = derive_seed(sc.seed, "key", *labels).to_bytes(32, "big")
        return crypto.generate_keypair(sc.scheme, seed)

    cfg = SimConfig(
        net=sc.net, mode=sc.mode, scheme=sc.scheme, sync_interval=sc.sync_interval,
        announce_interval=sc.announce_interval, followup_delay=sc.followup_delay,
        horizon=sc.horizon, seed=sc.seed, stop_on_alarm=sc.stop_on_alarm,
        max_consecutive_drops=sc.max_consecutive_drops, rotation_threshold=sc.rotation_threshold,
        nonce_space=sc.nonce_space,
    )
    long_term = keypair("sender")
    sender = Sender(
        long_term, sc.net, scheme=sc.scheme, mode=sc.mode, sync_interval=sc.sync_interval,
        announce_interval=sc.announce_interval, rotation_threshold=sc.rotation_threshold,
        nonce_space=sc.nonce_space,
    )
    tcs = [
        TransparentClockNode(f"tc{i}", keypair("tc", i), res, sc.scheme, sc.seed)
        for i, res in enumerate(sc.tc_residences)
    ]
    trusted = {tc.tc_id: tc.keypair.public for tc in tcs} if sc.trust_tc else {}
    receivers = {}
    for i in range(sc.receivers):
        clock = SimClock.anchored(cfg.start, sc.per_receiver(sc.initial_offset, i), sc.per_receiver(sc.drift, i))
        receivers[f"r{i}"] = Receiver(
            long_term.public, sc.net, keypair("receiver", i), clock, scheme=sc.scheme,
            buffer_capacity=sc.buffer, bootstrap=sc.bootstrap, bootstrap_followup=sc.bootstrap_followup,
            trusted_tcs=trusted,
        )
    try:
        adversary = make_adversary(sc.adversary, **sc.adversary_params)
    except TypeError as exc:
        raise ConfigError(f"adversary parameters: {exc}") from None
    sampler = DelaySampler(sc.net, sc.seed, sc.delay_policy, sc.delay_fixed)
    return Simulation(cfg, sender, receivers, adversary, sampler=sampler, tcs=tcs)
