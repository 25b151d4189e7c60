"""Low-precision solar position and day/night labelling.

Solar declination and the equation of time come from the NOAA general
solar position series in Julian centuries (mean longitude and anomaly,
equation of centre, nutation-corrected obliquity); the hour angle follows
from true solar time. Elevations are geometric (no refraction term); the
sunrise threshold of -0.833 degrees already folds in mean refraction and
the solar semi-diameter.
"""

from __future__ import annotations

import math
from datetime import datetime, timezone

import numpy as np

from .geo import GeoPoint

DAYLIGHT_THRESHOLDS = {
    "sunrise-sunset": -0.833,
    "civil": -6.0,
    "nautical": -12.0,
    "astronomical": -18.0,
}
DAYLIGHT_SYSTEMS = tuple(DAYLIGHT_THRESHOLDS)

_J2000_UNIX = 946_728_000  # 2000-01-01T12:00:00Z


def julian_century(seconds):
    return (np.asarray(seconds, dtype=float) - _J2000_UNIX) / (86400.0 * 36525.0)


def sun_terms(jc):
    """(equation of time in minutes, declination in radians) for Julian centuries ``jc``."""
    L0 = np.radians((280.46646 + jc * (36000.76983 + jc * 0.0003032)) % 360.0)
    M = np.radians(357.52911 + jc * (35999.05029 - 0.0001537 * jc))
    e = 0.016708634 - jc * (0.000042037 + 0.0000001267 * jc)
    C = (np.sin(M) * (1.914602 - jc * (0.004817 + 0.000014 * jc))
         + np.sin(2 * M) * (0.019993 - 0.000101 * jc) + np.sin(3 * M) * 0.000289)
    omega = np.radians(125.04 - 1934.136 * jc)
    lam = np.radians(np.degrees(L0) + C - 0.00569 - 0.00478 * np.sin(omega))
    eps0 = 23.0 + (26.0 + (21.448 - jc * (46.815 + jc * (0.00059 - jc * 0.001813))) / 60.0) / 60.0
    eps = np.radians(eps0 + 0.00256 * np.cos(omega))
    decl = np.arcsin(np.sin(eps) * np.sin(lam))
    y = np.tan(eps / 2) ** 2
    eot = 4.0 * np.degrees(y * np.sin(2 * L0) - 2 * e * np.sin(M)
                           + 4 * e * y * np.sin(M) * np.cos(2 * L0)
                           - 0.5 * y * y * np.sin(4 * L0) - 1.25 * e * e * np.sin(2 * M))
    return eot, decl


def solar_elevation_array(lat, lng, seconds) -> np.ndarray:
    """Elevation in degrees for arrays of latitude, longitude and unix seconds."""
    seconds = np.asarray(seconds, dtype=np.int64)
    days = np.floor_divide(seconds, 86400)
    minutes = (seconds - days * 86400) / 60.0
    eot, decl = sun_terms(julian_century(seconds))
    true_solar = minutes + eot + 4.0 * np.asarray(lng, dtype=float)
    hour_angle = np.radians(true_solar / 4.0 - 180.0)
    phi = np.radians(np.asarray(lat, dtype=float))
    cosz = np.sin(phi) * np.sin(decl) + np.cos(phi) * np.cos(decl) * np.cos(hour_angle)
    return 90.0 - np.degrees(np.arccos(np.clip(cosz, -1.0, 1.0)))


def _unix(t: datetime) -> int:
    if t.tzinfo is None:
        raise ValueError("naive datetime; pass an aware UTC timestamp")
    return math.floor(t.astimezone(timezone.utc).timestamp())


def solar_elevation(p: GeoPoint, t: datetime) -> float:
    if not 1900 <= t.astimezone(timezone.utc).year <= 2100:
        raise ValueError("solar position supported for 1900-2100 only")
    return float(solar_elevation_array(p.lat, p.lng, _unix(t)))


def label_for_elevation(elevation, system: str = "sunrise-sunset"):
    """``"day"`` when the elevation reaches the system's threshold, else ``"night"``."""
    try:
        threshold = DAYLIGHT_THRESHOLDS[system]
    except KeyError:
        raise ValueError(f"unknown daylight system {system!r}") from None
    return "day" if elevation >= threshold else "night"


def period_of_day(p: GeoPoint, t: datetime, system: str = "sunrise-sunset") -> str:
    return label_for_elevation(solar_elevation(p, t), system)


def is_day_array(lat, lng, seconds, system: str = "sunrise-sunset") -> np.ndarray:
    return solar_elevation_array(lat, lng, seconds) >= DAYLIGHT_THRESHOLDS[system]
