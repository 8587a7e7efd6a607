"""
Spherical-earth conversions between (camera position, range, bearing) and target positions.

Bearings are degrees clockwise from true north, distances are nautical miles and
the earth is a sphere of radius ``EarthModel.radius_nm``.
"""
import math
from typing import Literal

from .errors import GeodesyDomainError, DataValidationError
from .types import GeoPoint, RangeBearing, EarthModel

ANTIPODAL_TOLERANCE = 1e-12  # radians of central angle


def normalize_lon(lon_deg: float) -> float:
    """Wrap a longitude into (-180, 180]."""
    if not math.isfinite(lon_deg):
        raise DataValidationError(f"non-finite longitude: {lon_deg}")
    if -180.0 < lon_deg <= 180.0:
        return lon_deg
    wrapped = math.fmod(lon_deg + 180.0, 360.0)
    if wrapped <= 0.0:
        wrapped += 360.0
    return wrapped - 180.0


def wrap_signed_deg(angle_deg: float) -> float:
    """Wrap an angular difference into (-180, 180]."""
    return normalize_lon(angle_deg)


def wrap_bearing(bearing_deg: float) -> float:
    """Wrap an angle into [0, 360)."""
    if not math.isfinite(bearing_deg):
        raise DataValidationError(f"non-finite bearing: {bearing_deg}")
    wrapped = bearing_deg % 360.0
    # tiny negative inputs round up to exactly 360
    if wrapped >= 360.0:
        wrapped = 0.0
    return wrapped


def point(lat_deg: float, lon_deg: float) -> GeoPoint:
    """Build a GeoPoint, normalizing the longitude first."""
    return GeoPoint(lat_deg, normalize_lon(lon_deg))


def destination_point(origin: GeoPoint, obs: RangeBearing, earth: EarthModel = EarthModel()) -> GeoPoint:
    """Great-circle destination reached from ``origin`` along ``obs``."""
    if obs.distance_nm >= math.pi * earth.radius_nm:
        raise GeodesyDomainError(
            f"distance {obs.distance_nm} NM reaches the antipode (limit {math.pi * earth.radius_nm:.3f} NM)"
        )
    delta = obs.distance_nm / earth.radius_nm
    theta = math.radians(obs.bearing_deg)
    lat1 = math.radians(origin.lat_deg)
    lon1 = math.radians(origin.lon_deg)

    sin_lat2 = math.sin(lat1) * math.cos(delta) + math.cos(lat1) * math.sin(delta) * math.cos(theta)
    lat2 = math.asin(max(-1.0, min(1.0, sin_lat2)))
    lon2 = lon1 + math.atan2(
        math.sin(theta) * math.sin(delta) * math.cos(lat1),
        math.cos(delta) - math.sin(lat1) * math.sin(lat2),
    )
    return GeoPoint(math.degrees(lat2), normalize_lon(math.degrees(lon2)))


def central_angle(origin: GeoPoint, target: GeoPoint) -> float:
    """Haversine central angle between two points in radians."""
    lat1, lon1, lat2, lon2 = map(math.radians, [origin.lat_deg, origin.lon_deg, target.lat_deg, target.lon_deg])
    d_lat = lat2 - lat1
    d_lon = lon2 - lon1
    hav = math.sin(d_lat / 2) ** 2 + math.cos(lat1) * math.cos(lat2) * math.sin(d_lon / 2) ** 2
    hav = min(1.0, max(0.0, hav))
    return 2 * math.atan2(math.sqrt(hav), math.sqrt(1 - hav))


def initial_bearing(origin: GeoPoint, target: GeoPoint) -> float:
    """Initial great-circle bearing from origin to target in [0, 360)."""
    lat1, lon1, lat2, lon2 = map(math.radians, [origin.lat_deg, origin.lon_deg, target.lat_deg, target.lon_deg])
    d_lon = lon2 - lon1
    bearing = math.atan2(
        math.sin(d_lon) * math.cos(lat2),
        math.cos(lat1) * math.sin(lat2) - math.sin(lat1) * math.cos(lat2) * math.cos(d_lon),
    )
    return wrap_bearing(math.degrees(bearing))


def inverse_problem(origin: GeoPoint, target: GeoPoint, earth: EarthModel = EarthModel()) -> RangeBearing:
    """Great-circle distance and initial bearing from origin to target."""
    if origin == target:
        return RangeBearing(0.0, 0.0)
    angle = central_angle(origin, target)
    if math.pi - angle < ANTIPODAL_TOLERANCE:
        raise GeodesyDomainError(f"bearing undefined between antipodal points {origin} and {target}")
    return RangeBearing(angle * earth.radius_nm, initial_bearing(origin, target))


def great_circle_distance_nm(origin: GeoPoint, target: GeoPoint, earth: EarthModel = EarthModel()) -> float:
    return central_angle(origin, target) * earth.radius_nm


def to_dms(angle_deg: float) -> tuple[int, int, int, float]:
    """Split an angle into (sign, degrees, minutes, seconds)."""
    sign = -1 if angle_deg < 0 else 1
    total_seconds = abs(angle_deg) * 3600.0
    degrees, rest = divmod(total_seconds, 3600.0)
    minutes, seconds = divmod(rest, 60.0)
    return sign, int(degrees), int(minutes), seconds


def format_dms(angle_deg: float, axis: Literal["lat", "lon"], precision: int = 3) -> str:
    """Format an angle as e.g. 32°42'00.000"N."""
    sign, degrees, minutes, seconds = to_dms(angle_deg)
    # carry rounding overflow (59.9996" -> 60.000")
    seconds = round(seconds, precision)
    if seconds >= 60.0:
        seconds -= 60.0
        minutes += 1
    if minutes >= 60:
        minutes -= 60
        degrees += 1
    if axis == "lat":
        hemisphere = "N" if sign > 0 else "S"
    else:
        hemisphere = "E" if sign > 0 else "W"
    width = 3 + precision if precision > 0 else 2
    return f"{degrees}°{minutes:02d}'{seconds:0{width}.{precision}f}\"{hemisphere}"


def format_point(p: GeoPoint) -> str:
    return f"{format_dms(p.lat_deg, 'lat')} {format_dms(p.lon_deg, 'lon')}"
