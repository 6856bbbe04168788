from fractions import Fraction

import pytest
from hypothesis import given, strategies as st

from securetime.clock import ConfigError, NetParams, ProtocolOrderError, SimClock, clamp_correction

MS, US, S = 1_000_000, 1_000, 1_000_000_000
PPM = Fraction(1, 10**6)


def test_read_examples():
    assert SimClock().read(5 * S) == 5 * S
    assert SimClock(drift=100 * PPM).read(10 * S) == 10 * S + 1 * MS
    assert SimClock(offset=-3 * MS).read(1 * S) == 997 * MS


def test_anchored_clock():
    c = SimClock.anchored(100 * S, -2 * MS, 50 * PPM)
    assert c.true_offset(100 * S) == -2 * MS
    assert c.true_offset(101 * S) == -2 * MS + 50 * US


@given(st.integers(0, 10**12), st.integers(-10**9, 10**9), st.integers(-200, 200))
def test_true_time_at_inverts_read(t, offset, ppm):
    c = SimClock(offset, ppm * PPM)
    local = c.read(t)
    tt = c.true_time_at(local)
    assert c.read(tt) >= local and (tt == 0 or c.read(tt - 1) < local)


def test_set_time():
    c = SimClock(5, 10 * PPM)
    c.set_time(S, 42)
    assert c.read(S) == 42


@pytest.mark.parametrize("raw, out", [(500 * US, 100 * US), (50 * US, 50 * US), (-500 * US, -100 * US)])
def test_clamp_examples(raw, out):
    assert clamp_correction(raw, 2 * S, 1 * S, 100 * PPM) == out


@given(st.integers(-10**10, 10**10), st.integers(0, 10**12), st.integers(1, 10**4))
def test_clamp_never_exceeds_budget(raw, dt, ppm):
    rho = ppm * PPM
    d = clamp_correction(raw, dt, 0, rho)
    assert abs(d) <= dt * rho
    assert abs(d) <= abs(raw) and (d == 0 or (d > 0) == (raw > 0))


def test_clamp_order_error():
    with pytest.raises(ProtocolOrderError):
        clamp_correction(1, 5, 6, PPM)


def test_net_params():
    n = NetParams(0, 5 * MS, 100 * PPM)
    assert n.spread == 5 * MS
    assert n.measurement_interval == 100 * S
    assert NetParams(MS, MS, 50 * PPM).measurement_interval == 1
    assert NetParams(0, 1, Fraction(2, 3)).measurement_interval == 3
    for bad in [(2, 1, PPM), (-1, 1, PPM), (0, 1, 0), (0, 1, 1)]:
        with pytest.raises(ConfigError):
            NetParams(*bad)
