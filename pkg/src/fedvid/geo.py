"""Spherical-earth helpers: great-circle distance, initial bearing, angle wrapping,
and the small-scale metric/degree conversions used throughout the simulator."""

from __future__ import annotations

import math

EARTH_RADIUS_M = 6371000.0
METERS_PER_DEG_LAT = 111320.0


def haversine_m(lat1: float, lng1: float, lat2: float, lng2: float) -> float:
    """Great-circle distance in meters between two lat/lng points (decimal degrees)."""
    p1 = math.radians(lat1)
    p2 = math.radians(lat2)
    dp = math.radians(lat2 - lat1)
    dl = math.radians(lng2 - lng1)
    a = math.sin(dp / 2.0) ** 2 + math.cos(p1) * math.cos(p2) * math.sin(dl / 2.0) ** 2
    return 2.0 * EARTH_RADIUS_M * math.asin(min(1.0, math.sqrt(a)))


def initial_bearing_flagged(lat1: float, lng1: float, lat2: float, lng2: float) -> tuple[float, bool]:
    """Initial great-circle bearing from point 1 to point 2, clockwise from north
    in [0, 360). Coincident points are degenerate: returns (0.0, True)."""
    if lat1 == lat2 and lng1 == lng2:
        return 0.0, True
    p1 = math.radians(lat1)
    p2 = math.radians(lat2)
    dl = math.radians(lng2 - lng1)
    y = math.sin(dl) * math.cos(p2)
    x = math.cos(p1) * math.sin(p2) - math.sin(p1) * math.cos(p2) * math.cos(dl)
    return math.degrees(math.atan2(y, x)) % 360.0, False


def initial_bearing(lat1: float, lng1: float, lat2: float, lng2: float) -> float:
    """Bearing without the degenerate flag; 0.0 for coincident points."""
    return initial_bearing_flagged(lat1, lng1, lat2, lng2)[0]


def wrap_deg(angle: float) -> float:
    """Wrap an angle to [0, 360)."""
    return angle % 360.0


def angle_diff_deg(a: float, b: float) -> float:
    """Smallest signed difference a-b in degrees, in [-180, 180)."""
    return (a - b + 180.0) % 360.0 - 180.0


def meters_to_deg(north_m: float, east_m: float, at_lat: float) -> tuple[float, float]:
    """Convert a local ENU offset in meters to (dlat, dlng) degrees at a latitude."""
    dlat = north_m / METERS_PER_DEG_LAT
    dlng = east_m / (METERS_PER_DEG_LAT * math.cos(math.radians(at_lat)))
    return dlat, dlng


def deg_to_meters(dlat: float, dlng: float, at_lat: float) -> tuple[float, float]:
    """Convert a (dlat, dlng) offset in degrees to local (north_m, east_m)."""
    north = dlat * METERS_PER_DEG_LAT
    east = dlng * METERS_PER_DEG_LAT * math.cos(math.radians(at_lat))
    return north, east


def latlng_scale_deg(range_m: float, at_lat: float) -> tuple[float, float]:
    """Degrees of latitude and longitude spanned by `range_m` meters at a latitude.

    Used as the normalization scale for message/ego position differences.
    """
    lat_deg = range_m / METERS_PER_DEG_LAT
    lng_deg = range_m / (METERS_PER_DEG_LAT * math.cos(math.radians(at_lat)))
    return lat_deg, lng_deg
