"""Spherical distances and a local equirectangular tangent plane.

All distances use the haversine formula on a sphere with the WGS-84 mean
radius. Over the 10 km / 3.6 km scales these feed, the difference from an
ellipsoidal geodesic is well under one percent.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

EARTH_RADIUS_M = 6_371_008.8
MAX_PROJECTION_RANGE_M = 500_000.0


class ProjectionRangeError(ValueError):
    """Point too far from the projection origin; re-anchor the origin."""


@dataclass(frozen=True)
class GeoPos:
    lat: float
    lon: float

    def __post_init__(self):
        if not (-90.0 <= self.lat <= 90.0) or not (-180.0 <= self.lon <= 180.0):
            raise ValueError(f"invalid position ({self.lat}, {self.lon})")


@dataclass(frozen=True)
class PlanarPos:
    x: float
    y: float
    origin: GeoPos


@njit(cache=True)
def haversine_m(lat1, lon1, lat2, lon2):
    p1 = math.radians(lat1)
    p2 = math.radians(lat2)
    dp = p2 - p1
    dl = math.radians(lon2 - lon1)
    h = math.sin(dp * 0.5) ** 2 + math.cos(p1) * math.cos(p2) * math.sin(dl * 0.5) ** 2
    if h > 1.0:
        h = 1.0
    return 2.0 * EARTH_RADIUS_M * math.asin(math.sqrt(h))


def haversine_array(lat1, lon1, lat2, lon2) -> np.ndarray:
    """Vectorized haversine distance in meters (broadcasting)."""
    p1 = np.radians(lat1)
    p2 = np.radians(lat2)
    dl = np.radians(np.asarray(lon2) - np.asarray(lon1))
    h = np.sin((p2 - p1) * 0.5) ** 2 + np.cos(p1) * np.cos(p2) * np.sin(dl * 0.5) ** 2
    return 2.0 * EARTH_RADIUS_M * np.arcsin(np.sqrt(np.minimum(h, 1.0)))


def geodesic_distance(a: GeoPos, b: GeoPos) -> float:
    return float(haversine_m(a.lat, a.lon, b.lat, b.lon))


@njit(cache=True)
def project_xy(lat0, lon0, lat, lon):
    """Equirectangular projection about (lat0, lon0); returns (east, north) in meters."""
    dlon = lon - lon0
    if dlon > 180.0:
        dlon -= 360.0
    elif dlon < -180.0:
        dlon += 360.0
    x = EARTH_RADIUS_M * math.radians(dlon) * math.cos(math.radians(lat0))
    y = EARTH_RADIUS_M * math.radians(lat - lat0)
    return x, y


@njit(cache=True)
def unproject_xy(lat0, lon0, x, y):
    lat = lat0 + math.degrees(y / EARTH_RADIUS_M)
    lon = lon0 + math.degrees(x / (EARTH_RADIUS_M * math.cos(math.radians(lat0))))
    if lon > 180.0:
        lon -= 360.0
    elif lon <= -180.0:
        lon += 360.0
    return lat, lon


def project_local(origin: GeoPos, p: GeoPos) -> PlanarPos:
    if geodesic_distance(origin, p) > MAX_PROJECTION_RANGE_M:
        raise ProjectionRangeError(
            f"{p} is more than {MAX_PROJECTION_RANGE_M / 1000:.0f} km from origin {origin}"
        )
    x, y = project_xy(origin.lat, origin.lon, p.lat, p.lon)
    return PlanarPos(x, y, origin)


def unproject_local(p: PlanarPos) -> GeoPos:
    lat, lon = unproject_xy(p.origin.lat, p.origin.lon, p.x, p.y)
    return GeoPos(lat, lon)


def angle_diff(a: float, b: float) -> float:
    """Smallest absolute separation of two bearings in degrees, in [0, 180]."""
    d = abs(a - b) % 360.0
    return 360.0 - d if d > 180.0 else d


@njit(cache=True)
def angle_diff_deg(a, b):
    d = abs(a - b) % 360.0
    if d > 180.0:
        return 360.0 - d
    return d


@njit(cache=True)
def wrap_pi(a):
    """Wrap an angle in radians to (-pi, pi]."""
    r = (a + math.pi) % (2.0 * math.pi) - math.pi
    if r <= -math.pi:
        r += 2.0 * math.pi
    return r


def degrees_per_meter_lat() -> float:
    return 180.0 / (math.pi * EARTH_RADIUS_M)


def lon_span_for_distance(distance_m: float, max_abs_lat: float) -> float:
    """Upper bound on |dlon| (degrees) for two points within ``distance_m`` whose
    latitudes both have magnitude <= ``max_abs_lat``. Returns 360 near the poles."""
    c = math.cos(math.radians(min(max_abs_lat, 90.0)))
    s = math.sin(distance_m / (2.0 * EARTH_RADIUS_M))
    if c <= 1e-9 or s >= c:
        return 360.0
    return math.degrees(2.0 * math.asin(s / c))
