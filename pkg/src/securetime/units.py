"""Integer-nanosecond durations and exact rational rates."""

from __future__ import annotations

import re
from fractions import Fraction

NS = 1
US = 1_000
MS = 1_000_000
S = 1_000_000_000

_DURATION_UNITS = {"ns": NS, "us": US, "µs": US, "ms": MS, "s": S}
_RATE_UNITS = {"ppm": Fraction(1, 10**6), "ppb": Fraction(1, 10**9), "": Fraction(1)}

_NUM = r"[+-]?(?:\d+(?:\.\d*)?|\.\d+)(?:[eE][+-]?\d+)?"
_DURATION_RE = re.compile(rf"^\s*({_NUM})\s*(ns|us|µs|ms|s)?\s*$")
_RATE_RE = re.compile(rf"^\s*({_NUM})\s*(ppm|ppb)?\s*$")


def round_half_away(x: Fraction) -> int:
    """Round a rational to the nearest integer, ties away from zero."""
    n, d = x.numerator, x.denominator
    q, r = divmod(abs(n), d)
    if 2 * r >= d:
        q += 1
    return q if n >= 0 else -q


def mul_round(value: int, rate: Fraction) -> int:
    # Same result as round_half_away(value * rate), without building a Fraction.
    n, d = value * rate.numerator, rate.denominator
    q, r = divmod(abs(n), d)
    if 2 * r >= d:
        q += 1
    return q if n >= 0 else -q


def parse_duration(text: str) -> int:
    """Parse ``"5ms"``, ``"200us"``, ``"1.5s"`` or a bare integer (ns)."""
    m = _DURATION_RE.match(str(text))
    if not m:
        raise ValueError(f"invalid duration: {text!r}")
    value = Fraction(m.group(1)) * _DURATION_UNITS[m.group(2) or "ns"]
    if value.denominator != 1:
        raise ValueError(f"duration is not a whole number of nanoseconds: {text!r}")
    return int(value)


def parse_rate(text: str) -> Fraction:
    """Parse ``"100ppm"``, ``"50ppb"`` or a bare decimal like ``"1e-4"``."""
    m = _RATE_RE.match(str(text))
    if not m:
        raise ValueError(f"invalid rate: {text!r}")
    return Fraction(m.group(1)) * _RATE_UNITS[m.group(2) or ""]


def format_duration(ns: int) -> str:
    """Render ns exactly, in the largest unit that keeps the value >= 1."""
    if ns == 0:
        return "0"
    sign = "-" if ns < 0 else ""
    mag = abs(ns)
    for suffix, scale in (("s", S), ("ms", MS), ("us", US)):
        if mag >= scale:
            whole, frac = divmod(mag, scale)
            digits = len(str(scale)) - 1
            tail = str(frac).rjust(digits, "0").rstrip("0")
            return f"{sign}{whole}{'.' + tail if tail else ''}{suffix}"
    return f"{sign}{mag}ns"


def format_rate(rate: Fraction) -> str:
    ppm = rate * 10**6
    if ppm.denominator == 1:
        return f"{ppm.numerator}ppm"
    return f"{float(ppm):g}ppm"
