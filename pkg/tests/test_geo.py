import math
import random

import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from lostsilence.geo import (
    GeoPixel,
    InvalidCoordinateError,
    OutOfRangeError,
    center_of,
    pixel_extent_meters,
    pixel_of,
    round_half_away,
)
from oracle import pixel_by_string

coord = st.floats(min_value=-1000, max_value=1000, allow_nan=False, allow_infinity=False)


def test_documented_examples():
    assert pixel_of(329.8634, 246.7919) == GeoPixel(329863, 246792)
    assert pixel_of(0.0, 0.0) == GeoPixel(0, 0)
    assert pixel_of(329.863, 246.792) == (329863, 246792)


def test_ties_round_away_from_zero():
    assert pixel_of(0.0005, -0.0005) == (1, -1)
    assert pixel_of(1.2345, -1.2345) == (1235, -1235)
    assert pixel_of(0.00049, -0.00049) == (0, 0)
    assert round_half_away(2.5) == 3
    assert round_half_away(-2.5) == -3


def test_keys_are_ints():
    p = pixel_of(12.3456, 65.4321)
    assert type(p.lat_milli) is int and type(p.lon_milli) is int


@pytest.mark.parametrize("bad", [math.nan, math.inf, -math.inf])
def test_non_finite_rejected(bad):
    with pytest.raises(InvalidCoordinateError):
        pixel_of(bad, 0.0)
    with pytest.raises(InvalidCoordinateError):
        pixel_of(0.0, bad)


def test_strict_mode_ranges():
    assert pixel_of(90.0, -180.0, strict=True) == (90000, -180000)
    with pytest.raises(OutOfRangeError):
        pixel_of(90.0001, 0.0, strict=True)
    with pytest.raises(OutOfRangeError):
        pixel_of(0.0, 180.5, strict=True)
    # permissive accepts the scenario's synthetic coordinates
    with pytest.raises(OutOfRangeError):
        pixel_of(329.863, 246.792, strict=True)
    assert pixel_of(329.863, 246.792) == (329863, 246792)


def test_string_oracle_agrees_on_10k_coordinates():
    rng = random.Random(20150601)
    for _ in range(10_000):
        lat = rng.uniform(-400, 400)
        lon = rng.uniform(-400, 400)
        if rng.random() < 0.2:
            # land near a tie: x.xxx5
            lat = round(lat, 3) + 0.0005
        assert tuple(pixel_of(lat, lon)) == pixel_by_string(lat, lon), (lat, lon)


@given(coord, coord)
def test_center_round_trip(lat, lon):
    p = pixel_of(lat, lon)
    assert pixel_of(*center_of(p)) == p


@given(st.integers(-10**6, 10**6), st.integers(-10**6, 10**6))
def test_every_pixel_is_idempotent_through_its_center(a, b):
    p = GeoPixel(a, b)
    assert pixel_of(*center_of(p)) == p


@given(coord, coord)
def test_string_oracle_property(lat, lon):
    assert tuple(pixel_of(lat, lon)) == pixel_by_string(lat, lon)


@given(st.integers(-10**6, 10**6), st.floats(-0.0004, 0.0004), st.floats(-0.0004, 0.0004))
def test_same_pixel_same_key(base, d1, d2):
    centre = base / 1000
    assert pixel_of(centre + d1, 0.0).lat_milli == pixel_of(centre + d2, 0.0).lat_milli


@given(coord)
def test_translation_consistency(lat):
    frac = abs(lat * 1000) % 1
    assume(0.01 < frac < 0.49 or 0.51 < frac < 0.99)
    assert pixel_of(lat + 0.001, 0.0).lat_milli == pixel_of(lat, 0.0).lat_milli + 1


def test_extent_at_equator():
    ew, ns = pixel_extent_meters(0.0)
    assert ns == pytest.approx(111.32)
    assert ew == pytest.approx(111.32)


def test_extent_per_degree_figures_within_one_percent():
    # 111.320 km per degree at 0 deg and 28.920 km at 75 deg, scaled by 0.001
    assert pixel_extent_meters(0.0)[0] == pytest.approx(111.320, rel=0.01)
    assert pixel_extent_meters(75.0)[0] == pytest.approx(28.920, rel=0.01)
    assert pixel_extent_meters(75.0)[0] == pytest.approx(28.81, abs=0.01)


def test_extent_at_pole_and_beyond():
    assert pixel_extent_meters(90.0)[0] == 0.0
    assert pixel_extent_meters(-90.0)[0] == 0.0
    with pytest.raises(OutOfRangeError):
        pixel_extent_meters(90.5)
    with pytest.raises(InvalidCoordinateError):
        pixel_extent_meters(math.nan)


@settings(max_examples=200)
@given(st.floats(0, 90), st.floats(0, 90))
def test_extent_non_increasing_in_abs_lat(a, b):
    lo, hi = sorted((a, b))
    assert pixel_extent_meters(hi)[0] <= pixel_extent_meters(lo)[0] + 1e-12
    assert pixel_extent_meters(-hi)[0] == pixel_extent_meters(hi)[0]
