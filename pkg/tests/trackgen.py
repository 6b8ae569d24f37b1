"""Small builders for hand-made tracks used across the test modules."""

from __future__ import annotations

import math

import numpy as np

from aisgnss.geo import EARTH_RADIUS_M
from aisgnss.ingest import Records, Track, parse_timestamp

T0 = parse_timestamp("2024-11-01T12:00:00.000Z")


def xy_to_records(mmsi, t_ms, x, y, sog, cog, lat0=34.0, lon0=128.0) -> Records:
    x, y = np.asarray(x, float), np.asarray(y, float)
    lat = lat0 + np.degrees(y / EARTH_RADIUS_M)
    lon = lon0 + np.degrees(x / (EARTH_RADIUS_M * math.cos(math.radians(lat0))))
    n = len(x)
    return Records(np.full(n, mmsi), np.asarray(t_ms, np.int64), lat, lon,
                   np.broadcast_to(np.asarray(sog, float), n).copy(),
                   np.broadcast_to(np.asarray(cog, float), n).copy())


def straight(mmsi=1, n=61, dt=10.0, speed=10.0, cog=90.0, t0=T0, lat0=34.0, lon0=128.0,
             x0=0.0, y0=0.0) -> Records:
    """Constant-velocity track along a compass course."""
    tt = np.arange(n) * dt
    psi = math.pi / 2 - math.radians(cog)
    x = x0 + speed * math.cos(psi) * tt
    y = y0 + speed * math.sin(psi) * tt
    return xy_to_records(mmsi, t0 + np.round(tt * 1000).astype(np.int64), x, y, speed, cog % 360.0, lat0, lon0)


def turning(mmsi=1, n=61, dt=10.0, speed=8.0, omega=0.01, cog0=0.0, t0=T0, lat0=34.0, lon0=128.0) -> Records:
    """Constant-turn-rate track (omega in rad/s, positive = counter-clockwise)."""
    tt = np.arange(n) * dt
    psi0 = math.pi / 2 - math.radians(cog0)
    psi = psi0 + omega * tt
    x = speed / omega * (np.sin(psi) - math.sin(psi0))
    y = speed / omega * (math.cos(psi0) - np.cos(psi))
    cog = np.mod(90.0 - np.degrees(psi), 360.0)
    return xy_to_records(mmsi, t0 + np.round(tt * 1000).astype(np.int64), x, y, speed, cog, lat0, lon0)


def track(records: Records) -> Track:
    s = records.sorted()
    return Track(int(s.mmsi[0]) if len(s) else 0, s)
