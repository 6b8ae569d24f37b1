import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from aisgnss.config import PipelineConfig
from aisgnss.geo import EARTH_RADIUS_M, GeoPos
from aisgnss.ingest import Records
from aisgnss.st_cluster import (
    Category,
    Coastline,
    CueKind,
    CueSet,
    MmsiHistory,
    StEvent,
    TrafficIndex,
    build_event,
    categorize_all,
    classify_cluster,
    st_dbscan,
    st_neighbors,
)
from oracles import brute_dbscan, partition
from trackgen import T0

CFG = PipelineConfig()
DEG_PER_M = 180.0 / (math.pi * EARTH_RADIUS_M)


def cues(rows, kind=CueKind.KINEMATIC) -> CueSet:
    """rows of (mmsi, t_s, north_m, east_m) around (34, 128)."""
    mm, t, y, x = (np.array(c, dtype=float) for c in zip(*rows)) if rows else ([], [], [], [])
    lat = 34.0 + np.asarray(y) * DEG_PER_M
    lon = 128.0 + np.asarray(x) * DEG_PER_M / math.cos(math.radians(34.0))
    return CueSet(kind, np.asarray(mm, np.int64), T0 + (np.asarray(t) * 1000).astype(np.int64), lat, lon)


def test_neighbor_examples():
    c = cues([(1, 0, 0, 0), (2, 60, 0, 0), (3, 0, 0, 11_000), (4, 1800, 0, 0)])
    assert st_neighbors(0, c, 10_000, 1800) == {1}


def test_six_colocated_form_one_cluster():
    c = cues([(k, 60 * k, 10 * k, 0) for k in range(6)])
    assert st_dbscan(c, 10_000, 1800, 5).tolist() == [0] * 6


def test_four_colocated_are_noise():
    c = cues([(k, 60 * k, 0, 0) for k in range(4)])
    assert st_dbscan(c, 10_000, 1800, 5).tolist() == [-1] * 4


def test_labels_follow_input_alignment():
    c = cues([(k, 60 * k, 0, 0) for k in range(6)] + [(9, 99_999, 0, 0)])
    perm = np.random.default_rng(0).permutation(len(c))
    a = st_dbscan(c, 10_000, 1800, 5)
    b = st_dbscan(c.take(perm), 10_000, 1800, 5)
    assert b.tolist() == a[perm].tolist()


def random_cues(rng, n):
    lat = rng.uniform(33.0, 33.0 + rng.uniform(0.05, 1.0), n)
    lon = rng.uniform(127.0, 127.0 + rng.uniform(0.05, 1.0), n)
    t = T0 + rng.integers(0, int(rng.uniform(600, 20_000)) * 1000, n)
    return CueSet(CueKind.KINEMATIC, rng.integers(1, 30, n), t, lat, lon)


def assert_matches_oracle(c, eps_s, eps_t, min_pts):
    got = st_dbscan(c, eps_s, eps_t, min_pts)
    order = c.canonical_order()
    ref = np.empty(len(c), dtype=np.int64)
    ref[order] = brute_dbscan(c.lat[order], c.lon[order], c.t[order], eps_s, eps_t, min_pts)
    assert partition(got) == partition(ref)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 300), st.floats(200, 20_000), st.floats(10, 3600),
       st.integers(1, 8))
def test_grid_dbscan_matches_brute_force(seed, n, eps_s, eps_t, min_pts):
    assert_matches_oracle(random_cues(np.random.default_rng(seed), n), eps_s, eps_t, min_pts)


def test_grid_dbscan_near_antimeridian():
    rng = np.random.default_rng(5)
    n = 200
    lon = rng.uniform(179.9, 180.1, n)
    lon = np.where(lon > 180, lon - 360, lon)
    c = CueSet(CueKind.TX_GAP, rng.integers(1, 20, n), T0 + rng.integers(0, 3_600_000, n),
               rng.uniform(-0.05, 0.05, n), lon)
    assert_matches_oracle(c, 5000, 1800, 4)


def test_integer_boundary_in_time():
    c = cues([(k, 1800 * k, 0, 0) for k in range(6)])
    assert st_dbscan(c, 10_000, 1800, 2).tolist() == [-1] * 6
    assert st_dbscan(c, 10_000, 1800.001, 2).tolist() == [0] * 6


def traffic_with(mmsis, t_s=0, lat=34.0, lon=128.0) -> TrafficIndex:
    n = len(mmsis)
    return TrafficIndex(Records(mmsis, np.full(n, T0 + t_s * 1000), np.full(n, lat), np.full(n, lon),
                                np.ones(n), np.zeros(n)))


def multi_vessel_event(kind, n_vessels, radius_m):
    rng = np.random.default_rng(1)
    rows = []
    for m in range(n_vessels):
        r, th = radius_m * math.sqrt(rng.random()), rng.uniform(0, 2 * math.pi)
        rows += [(100 + m, rng.uniform(0, 20), r * math.sin(th), r * math.cos(th)),
                 (100 + m, rng.uniform(0, 20) + 20, r * math.sin(th), r * math.cos(th))]
    c = cues(rows, kind)
    labels = st_dbscan(c, CFG.eps_s, CFG.eps_t, CFG.min_pts)
    assert set(labels.tolist()) == {0}
    return c, build_event(0, c, np.arange(len(c)))


def test_spoofing_geometry_classifies_as_spoofing():
    c, ev = multi_vessel_event(CueKind.KINEMATIC, 11, 9_000)
    assert ev.distinct_mmsis == 11
    cat = classify_cluster(ev, traffic_with(list(range(100, 111))), MmsiHistory(), CFG, None, c)
    assert cat is Category.SPOOFING and ev.anomalous_ratio == 1.0


def test_jamming_geometry_classifies_as_jamming():
    c, ev = multi_vessel_event(CueKind.TX_GAP, 11, 10_500)
    cat = classify_cluster(ev, traffic_with(list(range(100, 111))), MmsiHistory(), CFG, None, c)
    assert cat is Category.JAMMING


def test_low_ratio_is_noise():
    c, ev = multi_vessel_event(CueKind.KINEMATIC, 6, 5_000)
    bystanders = list(range(100, 106)) + list(range(500, 505))
    cat = classify_cluster(ev, traffic_with(bystanders), MmsiHistory(), CFG, None, c)
    assert ev.anomalous_ratio == pytest.approx(6 / 11) and cat is Category.NOISE


def test_too_few_vessels_is_noise():
    c, ev = multi_vessel_event(CueKind.KINEMATIC, 4, 5_000)
    assert classify_cluster(ev, traffic_with([100, 101, 102, 103]), MmsiHistory(), CFG, None, c) is Category.NOISE


def single_vessel_event(duration_s, mmsi=7):
    c = cues([(mmsi, k * duration_s / 9, 0, 0) for k in range(10)])
    return c, build_event(0, c, np.arange(10))


def far_coastline() -> Coastline:
    from shapely.geometry import Polygon
    return Coastline([Polygon([(130.0, 36.0), (131.0, 36.0), (131.0, 37.0), (130.0, 37.0)])])


def test_persistent_sensor_all_days():
    _, ev = single_vessel_event(1200)
    hist = MmsiHistory({7: 47}, {7: set(range(47))})
    coast = far_coastline()
    assert classify_cluster(ev, None, hist, CFG, coast) is Category.PERSISTENT_SENSOR
    assert ev.coastal is False


def test_transient_sensor_six_of_seventeen():
    _, ev = single_vessel_event(1200)
    hist = MmsiHistory({7: 17}, {7: set(range(6))})
    assert classify_cluster(ev, None, hist, CFG, far_coastline()) is Category.TRANSIENT_SENSOR


def test_single_vessel_duration_gates():
    hist = MmsiHistory({7: 1}, {7: {0}})
    _, short = single_vessel_event(100)
    assert classify_cluster(short, None, hist, CFG, None) is Category.NOISE
    _, coastal = single_vessel_event(300)
    assert classify_cluster(coastal, None, hist, CFG, None) is Category.PERSISTENT_SENSOR
    _, offshore = single_vessel_event(300)
    assert classify_cluster(offshore, None, hist, CFG, far_coastline()) is Category.NOISE


def test_single_vessel_gap_cluster_is_noise():
    c = cues([(7, k * 100, 0, 0) for k in range(10)], CueKind.TX_GAP)
    ev = build_event(0, c, np.arange(10))
    assert classify_cluster(ev, None, MmsiHistory({7: 1}, {7: {0}}), CFG, None) is Category.NOISE


def test_coastline_distance():
    d = far_coastline().distance_m(GeoPos(36.5, 129.9))
    expected = 0.1 * math.pi / 180 * EARTH_RADIUS_M * math.cos(math.radians(36.5))
    assert d == pytest.approx(expected, rel=1e-6)


def test_empty_categorization():
    events, rep = categorize_all(CueSet.empty(CueKind.KINEMATIC), CueSet.empty(CueKind.TX_GAP),
                                 TrafficIndex(Records.empty()), CFG)
    assert events == []
    assert all(v.points == 0 for v in rep.input.values())
    assert all(v == 0 for v in rep.clusters_total.values())


def test_categorize_all_counts_and_gates():
    kin, _ = multi_vessel_event(CueKind.KINEMATIC, 8, 5_000)
    gap, _ = multi_vessel_event(CueKind.TX_GAP, 3, 5_000)
    events, rep = categorize_all(kin, gap, traffic_with(list(range(100, 108))), CFG)
    cats = sorted(e.category.value for e in events)
    assert cats == ["noise", "spoofing"]
    k = rep.categories["kinematic"]
    assert k["spoofing"].points == len(kin) and k["spoofing"].mmsis == 8
    assert rep.final_clusters["tx_gap"].points == 0
    for e in events:
        if e.category in (Category.SPOOFING, Category.JAMMING):
            assert e.distinct_mmsis >= 5 and e.anomalous_ratio >= 0.6
