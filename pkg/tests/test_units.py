from fractions import Fraction

import pytest
from hypothesis import given, strategies as st

from securetime.units import format_duration, mul_round, parse_duration, parse_rate, round_half_away


@pytest.mark.parametrize("text, ns", [
    ("0", 0), ("5ms", 5_000_000), ("200us", 200_000), ("200µs", 200_000),
    ("1.5s", 1_500_000_000), ("42", 42), ("42ns", 42), (" 3 ms ", 3_000_000), ("-3ms", -3_000_000),
])
def test_parse_duration(text, ns):
    assert parse_duration(text) == ns


@pytest.mark.parametrize("text", ["", "ms", "5 min", "1.5ns", "abc", "5msx"])
def test_parse_duration_rejects(text):
    with pytest.raises(ValueError):
        parse_duration(text)


@pytest.mark.parametrize("text, rate", [
    ("100ppm", Fraction(1, 10_000)), ("50ppb", Fraction(1, 20_000_000)), ("1e-4", Fraction(1, 10_000)), ("0", 0),
])
def test_parse_rate(text, rate):
    assert parse_rate(text) == rate


@pytest.mark.parametrize("ns, text", [
    (0, "0"), (100, "100ns"), (1_000, "1us"), (20_001_000, "20.001ms"), (8_000_300, "8.0003ms"),
    (15_000_000, "15ms"), (2_500_000_000, "2.5s"), (-4_000_000, "-4ms"),
])
def test_format_duration(ns, text):
    assert format_duration(ns) == text


@given(st.integers(min_value=-10**15, max_value=10**15))
def test_format_parse_round_trip(ns):
    assert parse_duration(format_duration(ns)) == ns


def test_round_half_away():
    assert round_half_away(Fraction(1, 2)) == 1
    assert round_half_away(Fraction(-1, 2)) == -1
    assert round_half_away(Fraction(3, 2)) == 2
    assert round_half_away(Fraction(149, 100)) == 1
    assert mul_round(10**10, Fraction(1, 10**4)) == 10**6
