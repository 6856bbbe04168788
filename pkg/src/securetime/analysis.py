"""Offset bounds, trace evaluation, and pass/fail checking."""

from __future__ import annotations

from dataclasses import dataclass, field, fields
from fractions import Fraction

from . import wire
from .clock import NetParams
from .netsim import Trace
from .units import format_duration

RECEIVER_EVENTS = {"announce", "sync1", "sync2", "followup", "delay-resp", "error-resp", "tick", "unknown", "unexpected"}
CORRECTION_EVENTS = {"sync1", "followup"}


class TruncatedTrace(ValueError):
    pass


@dataclass(frozen=True)
class BoundsSet:
    eps_m: int
    eps_1: int
    eps_2: int

    def render(self) -> str:
        return " ".join(f"{k}={format_duration(getattr(self, k))}" for k in ("eps_m", "eps_1", "eps_2"))


def compute_bounds(net: NetParams) -> BoundsSet:
    w = net.spread
    eps_2 = Fraction(4 * w) + 2 * net.delta_max * Fraction(net.rho_max)
    # Only non-integer when rho_max is finer than 1/(2*delta_max); round up to stay a bound.
    eps_2_ns = -((-eps_2.numerator) // eps_2.denominator)
    return BoundsSet(2 * w, 3 * w, eps_2_ns)


@dataclass
class RunReport:
    max_unnoticed_offset: int = 0
    offset_at_first_alarm: int | None = None
    forged_accepted: int = 0
    replays_accepted: int = 0
    first_alarm_at: int | None = None
    per_message_overhead: int = 0
    corrections_applied: int = 0
    corrections_clamped: int = 0
    first_alarm_kind: str = ""
    alarms: int = 0
    adversarial_events: int = 0
    end_reason: str = ""

    def to_text(self) -> str:
        lines = []
        for f in fields(self):
            v = getattr(self, f.name)
            lines.append(f"{f.name}={'' if v is None else v}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "RunReport":
        kinds = {f.name: f.type for f in fields(cls)}
        values = {}
        for line in text.splitlines():
            if not line.strip() or "=" not in line:
                continue
            k, _, v = line.partition("=")
            if k not in kinds:
                continue
            if kinds[k] == "str":
                values[k] = v
            else:
                values[k] = int(v) if v != "" else None
        return cls(**values)

    @staticmethod
    def columns() -> list[str]:
        return [f.name for f in fields(RunReport)]

    def row(self) -> list:
        return ["" if getattr(self, c) is None else getattr(self, c) for c in self.columns()]


def _accepted(info: dict) -> list[tuple[str, int]]:
    raw = info.get("acc")
    if not raw:
        return []
    out = []
    for part in str(raw).split(","):
        dig, _, at = part.partition("@")
        out.append((dig, int(at)))
    return out


def evaluate(trace: Trace) -> RunReport:
    """Reduce a complete trace to a RunReport.

    Offsets count toward ``max_unnoticed_offset`` only once a receiver has
    synchronized for the first time and only before that receiver's first
    alarm. The offset just before each applied correction is included, since
    the clock drifts between events and jumps at them.
    """
    if not trace.records or trace.records[-1].kind != "end":
        raise TruncatedTrace("trace has no end record")
    rep = RunReport()
    end = trace.records[-1]
    rep.end_reason = str(end.info.get("reason", ""))
    rep.adversarial_events = int(end.info.get("adv_events", 0))

    emitted: dict[str, int] = {}
    session_of: dict[str, int] = {}
    two_step = False
    alarmed: set[str] = set()
    was_synced: dict[str, bool] = {}
    seen_digests: dict[str, set[str]] = {}
    max_session: dict[str, int] = {}

    for rec in trace.records:
        info = rec.info
        if rec.kind == "emit":
            d = str(info.get("dig"))
            emitted.setdefault(d, rec.time)
            if "sess" in info:
                session_of.setdefault(d, int(info["sess"]))
            if info.get("msg") == wire.KIND_SYNC2:
                two_step = True
            continue
        if rec.kind not in RECEIVER_EVENTS:
            continue
        node = rec.node
        synced_now = info.get("sync") == 1
        if rec.alarm:
            rep.alarms += 1
            if rep.first_alarm_at is None:
                rep.first_alarm_at = rec.time
                rep.offset_at_first_alarm = abs(rec.true_offset or 0)
                rep.first_alarm_kind = rec.alarm
        if rec.alarm:
            alarmed.add(node)
        elif node not in alarmed and rec.true_offset is not None:
            if was_synced.get(node):
                before = rec.true_offset - (rec.delta or 0)
                rep.max_unnoticed_offset = max(rep.max_unnoticed_offset, abs(before))
            if synced_now:
                rep.max_unnoticed_offset = max(rep.max_unnoticed_offset, abs(rec.true_offset))
        was_synced[node] = was_synced.get(node, False) or synced_now

        if rec.kind in CORRECTION_EVENTS and rec.delta is not None:
            rep.corrections_applied += 1
            if info.get("clamped") == 1:
                rep.corrections_clamped += 1

        seen = seen_digests.setdefault(node, set())
        for dig, at in _accepted(info):
            t_emit = emitted.get(dig)
            if t_emit is None or t_emit > at:
                rep.forged_accepted += 1
                continue
            sess = session_of.get(dig)
            if dig in seen or (sess is not None and sess < max_session.get(node, -1)):
                rep.replays_accepted += 1
            seen.add(dig)
            if sess is not None:
                max_session[node] = max(max_session.get(node, -1), sess)

    rep.per_message_overhead = wire.SYNC2_PAIR_AUTH_OVERHEAD if two_step else wire.SYNC1_AUTH_OVERHEAD
    return rep


@dataclass
class Criterion:
    name: str
    ok: bool
    detail: str


@dataclass
class Verdict:
    criteria: list[Criterion] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.ok for c in self.criteria)

    @property
    def failed(self) -> list[str]:
        return [c.name for c in self.criteria if not c.ok]

    def render(self) -> str:
        lines = [f"{'PASS' if c.ok else 'FAIL'} {c.name}: {c.detail}" for c in self.criteria]
        lines.append(f"verdict={'pass' if self.passed else 'fail'}")
        return "\n".join(lines) + "\n"


def check(report: RunReport, bounds: BoundsSet, tolerance: int = 0) -> Verdict:
    v = Verdict()
    lim1 = bounds.eps_1 + tolerance
    v.criteria.append(Criterion(
        "unnoticed-offset", report.max_unnoticed_offset <= lim1,
        f"{report.max_unnoticed_offset} <= {lim1}",
    ))
    if report.offset_at_first_alarm is not None:
        lim2 = bounds.eps_2 + tolerance
        v.criteria.append(Criterion(
            "offset-at-alarm", report.offset_at_first_alarm <= lim2,
            f"{report.offset_at_first_alarm} <= {lim2}",
        ))
    v.criteria.append(Criterion("no-forgery", report.forged_accepted == 0, f"forged_accepted={report.forged_accepted}"))
    v.criteria.append(Criterion("no-replay", report.replays_accepted == 0, f"replays_accepted={report.replays_accepted}"))
    return v
