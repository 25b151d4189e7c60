from datetime import datetime, timedelta, timezone

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from accrisk.geo import GeoPoint
from accrisk.solar import (DAYLIGHT_SYSTEMS, DAYLIGHT_THRESHOLDS, is_day_array,
                           label_for_elevation, period_of_day, solar_elevation,
                           solar_elevation_array)
from oracles import almanac_elevation, apparent_solar_hours


def utc(*args):
    return datetime(*args, tzinfo=timezone.utc)


def test_equator_equinox_noon_is_overhead():
    # 2019-03-20: solar noon at Greenwich is near 12:07 UTC
    best = max(solar_elevation(GeoPoint(0, 0), utc(2019, 3, 20, 12, m)) for m in range(0, 20))
    assert best > 89.0


def test_polar_night():
    for h in range(24):
        assert solar_elevation(GeoPoint(89.9, 0), utc(2018, 12, 21, h)) < 0


def test_against_almanac_oracle_columbus():
    t = utc(2018, 6, 21, 17)
    assert abs(solar_elevation(GeoPoint(40, -83), t) - almanac_elevation(40, -83, t)) < 0.5


@settings(max_examples=200, deadline=None)
@given(st.floats(-66, 66), st.floats(-180, 180), st.integers(-2_208_988_800, 4_102_444_799))
def test_random_positions_agree_with_oracle(lat, lng, secs):
    t = datetime.fromtimestamp(secs, tz=timezone.utc)
    assert abs(solar_elevation(GeoPoint(lat, lng), t) - almanac_elevation(lat, lng, t)) < 0.5


def test_array_matches_scalar():
    secs = np.arange(0, 86400, 3600) + 1_530_000_000
    arr = solar_elevation_array(33.7, -84.4, secs)
    for s, v in zip(secs, arr):
        assert v == solar_elevation(GeoPoint(33.7, -84.4),
                                    datetime.fromtimestamp(int(s), tz=timezone.utc))


def test_labels_by_threshold():
    assert all(label_for_elevation(30, s) == "day" for s in DAYLIGHT_SYSTEMS)
    assert label_for_elevation(-10, "sunrise-sunset") == "night"
    assert label_for_elevation(-10, "civil") == "night"
    assert label_for_elevation(-10, "nautical") == "day"
    assert label_for_elevation(-10, "astronomical") == "day"
    assert DAYLIGHT_THRESHOLDS["sunrise-sunset"] == -0.833
    with pytest.raises(ValueError):
        label_for_elevation(0, "lunar")


def test_naive_datetime_rejected():
    with pytest.raises(ValueError):
        solar_elevation(GeoPoint(0, 0), datetime(2019, 1, 1))


def test_out_of_range_year():
    with pytest.raises(ValueError):
        period_of_day(GeoPoint(0, 0), utc(2150, 1, 1))


def _sunrise(lat, lng, day: datetime, threshold=-0.833):
    """Bisection on our elevation for the morning crossing of ``threshold``."""
    p = GeoPoint(lat, lng)
    lo, hi = day + timedelta(hours=3), day + timedelta(hours=9)
    assert solar_elevation(p, lo) < threshold < solar_elevation(p, hi)
    while hi - lo > timedelta(seconds=1):
        mid = lo + (hi - lo) / 2
        if solar_elevation(p, mid) < threshold:
            lo = mid
        else:
            hi = mid
    return hi


def test_equator_equinox_sunrise_near_six_local_solar_time():
    rise = _sunrise(0.0, 0.0, utc(2019, 3, 20))
    hours = apparent_solar_hours(0.0, rise)
    assert abs(hours - 6.0) * 60 < 10
    # labels flip across the crossing
    p = GeoPoint(0, 0)
    assert period_of_day(p, rise - timedelta(minutes=2)) == "night"
    assert period_of_day(p, rise + timedelta(minutes=2)) == "day"


def test_ordering_of_twilight_systems():
    rng = np.random.default_rng(0)
    lat = rng.uniform(-60, 60, 1000)
    lng = rng.uniform(-180, 180, 1000)
    secs = rng.integers(1_262_304_000, 1_893_456_000, 1000)
    days = [is_day_array(lat, lng, secs, s) for s in DAYLIGHT_SYSTEMS]
    for a, b in zip(days, days[1:]):
        assert np.all(~a | b)
