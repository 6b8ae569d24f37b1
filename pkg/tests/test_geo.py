import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from aisgnss.geo import (
    EARTH_RADIUS_M,
    GeoPos,
    ProjectionRangeError,
    angle_diff,
    geodesic_distance,
    haversine_array,
    lon_span_for_distance,
    project_local,
    unproject_local,
    wrap_pi,
)

lats = st.floats(-80, 80)
lons = st.floats(-180, 180)

# 50-digit mpmath haversine with R = 6 371 008.8 m
ONE_DEGREE_LON_AT_33N = 93255.68997927282
QUARTER_MERIDIAN_X2 = 20015114.442035925


def test_zero_distance():
    a = GeoPos(33.0, 126.0)
    assert geodesic_distance(a, a) == 0.0


def test_one_degree_of_longitude_at_33n():
    d = geodesic_distance(GeoPos(33.0, 126.0), GeoPos(33.0, 127.0))
    assert d == pytest.approx(ONE_DEGREE_LON_AT_33N, rel=1e-12)


def test_antipodal_is_half_circumference():
    d = geodesic_distance(GeoPos(0.0, 0.0), GeoPos(0.0, 180.0))
    assert d == pytest.approx(QUARTER_MERIDIAN_X2, rel=1e-12)
    assert d == pytest.approx(math.pi * EARTH_RADIUS_M, rel=1e-12)


def test_invalid_position_rejected():
    with pytest.raises(ValueError):
        GeoPos(91.0, 0.0)
    with pytest.raises(ValueError):
        GeoPos(0.0, 181.0)


@given(lats, lons, lats, lons)
def test_haversine_symmetric_and_bounded(a, b, c, d):
    x = geodesic_distance(GeoPos(a, b), GeoPos(c, d))
    y = geodesic_distance(GeoPos(c, d), GeoPos(a, b))
    assert x == pytest.approx(y, abs=1e-6)
    assert 0.0 <= x <= math.pi * EARTH_RADIUS_M + 1e-6


@given(lats, lons, lats, lons, lats, lons)
def test_triangle_inequality(a, b, c, d, e, f):
    p, q, r = GeoPos(a, b), GeoPos(c, d), GeoPos(e, f)
    assert geodesic_distance(p, r) <= geodesic_distance(p, q) + geodesic_distance(q, r) + 1e-6


def test_vectorized_matches_scalar():
    rng = np.random.default_rng(3)
    la1, la2 = rng.uniform(-80, 80, (2, 200))
    lo1, lo2 = rng.uniform(-180, 180, (2, 200))
    v = haversine_array(la1, lo1, la2, lo2)
    s = [geodesic_distance(GeoPos(*p), GeoPos(*q)) for p, q in zip(zip(la1, lo1), zip(la2, lo2))]
    np.testing.assert_allclose(v, s, rtol=1e-12)


def test_projection_origin_and_north():
    o = GeoPos(34.0, 128.0)
    p = project_local(o, o)
    assert (p.x, p.y) == (0.0, 0.0)
    q = project_local(o, GeoPos(34.01, 128.0))
    assert q.x == pytest.approx(0.0, abs=1e-9)
    assert q.y == pytest.approx(1111.9508023353291, rel=1e-12)


def test_projection_agrees_with_geodesic_within_half_percent():
    rng = np.random.default_rng(11)
    for _ in range(1000):
        o = GeoPos(rng.uniform(-60, 60), rng.uniform(-179, 179))
        rr, th = rng.uniform(10, 50_000), rng.uniform(0, 2 * math.pi)
        lat = o.lat + math.degrees(rr * math.sin(th) / EARTH_RADIUS_M)
        lon = o.lon + math.degrees(rr * math.cos(th) / (EARTH_RADIUS_M * math.cos(math.radians(o.lat))))
        p = GeoPos(lat, (lon + 180) % 360 - 180)
        q = project_local(o, p)
        d = geodesic_distance(o, p)
        assert abs(math.hypot(q.x, q.y) - d) <= 0.005 * d


@settings(max_examples=200)
@given(st.floats(-70, 70), st.floats(-179, 179), st.floats(-0.3, 0.3), st.floats(-0.3, 0.3))
def test_projection_round_trip(lat0, lon0, dlat, dlon):
    o = GeoPos(lat0, lon0)
    p = GeoPos(lat0 + dlat, (lon0 + dlon + 180) % 360 - 180)
    back = unproject_local(project_local(o, p))
    assert back.lat == pytest.approx(p.lat, abs=1e-9)
    assert angle_diff(back.lon, p.lon) < 1e-9


def test_projection_across_antimeridian():
    q = project_local(GeoPos(0.0, 179.9), GeoPos(0.0, -179.9))
    assert q.x == pytest.approx(EARTH_RADIUS_M * math.radians(0.2), rel=1e-9)


def test_projection_range_error():
    with pytest.raises(ProjectionRangeError):
        project_local(GeoPos(0.0, 0.0), GeoPos(0.0, 10.0))


@pytest.mark.parametrize("a,b,expected", [(10, 350, 20), (90, 90, 0), (0, 180, 180), (359.5, 0.5, 1.0)])
def test_angle_diff_examples(a, b, expected):
    assert angle_diff(a, b) == pytest.approx(expected)


@given(st.floats(-1e4, 1e4), st.floats(-1e4, 1e4))
def test_angle_diff_range_and_symmetry(a, b):
    d = angle_diff(a, b)
    assert 0.0 <= d <= 180.0
    assert d == pytest.approx(angle_diff(b, a), abs=1e-9)


@given(st.floats(-100, 100))
def test_wrap_pi_range(a):
    w = wrap_pi(a)
    assert -math.pi < w <= math.pi
    assert math.isclose(math.sin(w), math.sin(a), abs_tol=1e-9)
    assert math.isclose(math.cos(w), math.cos(a), abs_tol=1e-9)


@given(st.floats(1.0, 50_000), st.floats(0, 80), st.floats(0, 1), st.floats(0, 2 * math.pi))
def test_lon_span_bounds_every_pair(dist, max_lat, frac, th):
    """Any point within ``dist`` of a point below ``max_lat`` differs in lon by at most the span."""
    span = lon_span_for_distance(dist, max_lat + 1.0)
    lat = max_lat * frac
    r = dist * 0.999
    lat2 = lat + math.degrees(r * math.sin(th) / EARTH_RADIUS_M)
    if abs(lat2) > max_lat + 1.0:
        return
    # walk east/west along the great circle direction approximately; verify with haversine
    lon2 = math.degrees(r * math.cos(th) / (EARTH_RADIUS_M * math.cos(math.radians(max(abs(lat), abs(lat2))))))
    if geodesic_distance(GeoPos(lat, 0.0), GeoPos(lat2, lon2)) < dist:
        assert abs(lon2) <= span
