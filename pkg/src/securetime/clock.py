"""Simulated drifting clocks, network parameters, and the correction clamp."""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

from .units import mul_round


class ConfigError(ValueError):
    pass


class ProtocolOrderError(ValueError):
    pass


@dataclass(frozen=True)
class NetParams:
    """One-way delay bounds (ns) and the maximum relative receiver drift."""

    delta_min: int
    delta_max: int
    rho_max: Fraction

    def __post_init__(self) -> None:
        object.__setattr__(self, "rho_max", Fraction(self.rho_max))
        if not 0 <= self.delta_min <= self.delta_max:
            raise ConfigError(
                f"need 0 <= delta_min <= delta_max, got {self.delta_min}, {self.delta_max}"
            )
        if not 0 < self.rho_max < 1:
            raise ConfigError(f"rho_max must lie in (0, 1), got {self.rho_max}")

    @property
    def spread(self) -> int:
        return self.delta_max - self.delta_min

    @property
    def measurement_interval(self) -> int:
        """eps_m / rho_max, floored, at least one nanosecond."""
        return max(1, int(Fraction(2 * self.spread) / self.rho_max))


@dataclass
class SimClock:
    """Affine clock: ``read(t) = offset + round((1 + drift) * t)``."""

    offset: int = 0
    drift: Fraction = Fraction(0)

    def __post_init__(self) -> None:
        self.drift = Fraction(self.drift)

    @classmethod
    def anchored(cls, start: int, offset_at_start: int, drift=Fraction(0)) -> "SimClock":
        """Clock that reads ``start + offset_at_start`` at true time ``start``."""
        clock = cls(0, drift)
        clock.offset = offset_at_start - clock.true_offset(start)
        return clock

    def read(self, true_time: int) -> int:
        if true_time < 0:
            raise ValueError("true_time must be non-negative")
        return self.offset + true_time + mul_round(true_time, self.drift)

    def true_offset(self, true_time: int) -> int:
        return self.read(true_time) - true_time

    def true_time_at(self, local: int) -> int:
        """Earliest true time at which ``read`` reaches ``local``."""
        num, den = self.drift.numerator, self.drift.denominator
        t = max((local - self.offset) * den // (den + num) - 2, 0)
        while self.read(t) < local:
            t += 1
        return t

    def set_time(self, true_time: int, local: int) -> None:
        self.offset += local - self.read(true_time)


def clamp_correction(raw_offset: int, t_arr: int, t_last: int, rho_max: Fraction) -> int:
    """Limit a correction to +/- (t_arr - t_last) * rho_max."""
    if t_arr < t_last:
        raise ProtocolOrderError(f"t_arr {t_arr} precedes t_last {t_last}")
    # Floored so the bound holds exactly, never by half a nanosecond over.
    limit = int(Fraction(t_arr - t_last) * Fraction(rho_max))
    return max(-limit, min(limit, raw_offset))


def apply_correction(clock: SimClock, delta: int) -> None:
    clock.offset += delta
