import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from aisgnss.comm_integrity import (
    ArtifactKind,
    detect_mmsi_duplication,
    detect_stale_retransmission,
    extract_subtracks,
    run_stage1,
    validate_subtrack_normal,
)
from aisgnss.config import PipelineConfig
from aisgnss.ingest import AisRecord, Records, Track, parse_timestamp, partition_by_mmsi
from trackgen import T0, straight, track, turning, xy_to_records

CFG = PipelineConfig()


def rebroadcast_fixture() -> tuple[Track, list[int]]:
    """Two originals and their delayed rebroadcasts inside a smooth 10 s track."""
    day = "2024-11-01T"
    o1 = AisRecord(440123456, parse_timestamp(day + "16:55:17.570Z"), 33.046447, 126.521270, 7.10, 196.2)
    o2 = AisRecord(440123456, parse_timestamp(day + "16:55:47.580Z"), 33.044635, 126.520480, 7.25, 201.5)
    r1 = AisRecord(o1.mmsi, parse_timestamp(day + "16:56:14.590Z"), o1.lat, o1.lon, o1.sog, o1.cog)
    r2 = AisRecord(o2.mmsi, parse_timestamp(day + "16:56:34.597Z"), o2.lat, o2.lon, o2.sog, o2.cog)
    assert r1.t - o1.t == 57_020 and r2.t - o2.t == 47_017
    span = (o2.t - o1.t) / 1000.0
    vlat, vlon = (o2.lat - o1.lat) / span, (o2.lon - o1.lon) / span
    rows = [o1, o2, r1, r2]
    for k in list(range(-12, 0)) + [1, 2] + list(range(4, 18)):
        t = o1.t + k * 10_000
        dt = (t - o1.t) / 1000.0
        rows.append(AisRecord(o1.mmsi, t, round(o1.lat + vlat * dt, 6), round(o1.lon + vlon * dt, 6),
                              round(7.1 + 0.01 * (k % 3), 2), round(198.0 + 0.1 * (k % 5), 1)))
    tr = track(Records.from_records(rows))
    flagged_t = {r1.t, r2.t}
    return tr, [i for i in range(len(tr)) if int(tr.records.t[i]) in flagged_t]


def test_replay_flags_exactly_the_rebroadcasts():
    tr, expected = rebroadcast_fixture()
    assert detect_stale_retransmission(tr) == set(expected)


def test_monotone_distinct_track_has_no_stale():
    assert detect_stale_retransmission(track(straight())) == set()


def test_triple_repeat_flags_second_and_third():
    rows = [AisRecord(1, T0 + k * 10_000, 33.0, 126.0, 5.0, 10.0) for k in range(3)]
    assert detect_stale_retransmission(track(Records.from_records(rows))) == {1, 2}


@settings(max_examples=100)
@given(st.lists(st.tuples(st.integers(0, 50), st.integers(0, 3)), max_size=40))
def test_stale_flags_every_later_repeat(rows):
    """A record is flagged iff the previous occurrence of its tuple carries a
    different timestamp."""
    recs = Records.from_records(
        AisRecord(1, T0 + t * 1000, 33.0 + 0.001 * k, 126.0, 5.0, 10.0) for t, k in rows)
    tr = track(recs)
    flagged = detect_stale_retransmission(tr)
    expect, last_t = set(), {}
    for i in range(len(tr)):
        key, t = float(tr.records.lat[i]), int(tr.records.t[i])
        if key in last_t and last_t[key] != t:
            expect.add(i)
        last_t[key] = t
    assert flagged == expect


def test_smooth_track_is_one_subtrack():
    subs = extract_subtracks(track(straight(n=181)), CFG)
    assert len(subs) == 1 and len(subs[0].indices) == 181


def interleaved(a: Records, b: Records, offset_ms=5_000) -> Records:
    b = b.copy()
    b.t += offset_ms
    b.mmsi[:] = a.mmsi[0]
    return Records.concat([a, b])


def test_two_vessels_sharing_mmsi_are_two_subtracks():
    a = straight(mmsi=7, n=181, speed=8.0, cog=45.0)
    b = straight(mmsi=8, n=181, speed=6.0, cog=300.0, x0=100_000.0)
    subs = extract_subtracks(track(interleaved(a, b)), CFG)
    assert len(subs) == 2


def test_short_fragment_discarded():
    assert extract_subtracks(track(straight(n=31)), CFG) == []


def test_normality_screen():
    sub = extract_subtracks(track(straight(n=121, speed=10.0)), CFG)[0]
    assert validate_subtrack_normal(sub, CFG)
    sub = extract_subtracks(track(turning(n=121, speed=8.0, omega=0.01)), CFG)[0]
    assert validate_subtrack_normal(sub, CFG)
    r = straight(n=121, speed=10.0)
    r.lon[60] += 5000.0 / (111_195.0 * math.cos(math.radians(34.0)))
    subs = extract_subtracks(track(r), CFG)
    assert not any(validate_subtrack_normal(s, CFG) for s in subs)


def test_duplication_two_normal_tracks_removed():
    a = straight(mmsi=7, n=181, speed=8.0, cog=45.0)
    b = straight(mmsi=8, n=181, speed=6.0, cog=300.0, x0=100_000.0)
    tr = track(interleaved(a, b))
    labels, cleaned = detect_mmsi_duplication({7: tr}, CFG)
    assert [l.kind for l in labels] == [ArtifactKind.MMSI_DUPLICATION]
    assert len(labels[0]) == len(tr)
    assert cleaned == {}


def erratic(mmsi, n, x0, seed=0, t0=T0) -> Records:
    """An emitter whose fixes jump around a 3 km patch with steady sog/cog."""
    rng = np.random.default_rng(seed)
    x = x0 + rng.uniform(-1500, 1500, n)
    y = rng.uniform(-1500, 1500, n)
    return xy_to_records(mmsi, t0 + 10_000 * np.arange(n), x, y, 5.0, 120.0)


def test_duplication_one_normal_track_is_true_track():
    a = straight(mmsi=7, n=181, speed=8.0, cog=45.0)
    b = erratic(8, 181, 60_000.0)
    tr = track(interleaved(a, b))
    labels, cleaned = detect_mmsi_duplication({7: tr}, CFG)
    kinds = {l.kind: l for l in labels}
    assert set(kinds) == {ArtifactKind.MMSI_DUPLICATION, ArtifactKind.TRUE_TRACK}
    true_t = set(tr.records.t[kinds[ArtifactKind.TRUE_TRACK].indices].tolist())
    assert true_t == set(a.t.tolist())
    assert cleaned[7].records == a.sorted()


def test_spoofed_excursion_is_retained():
    r = straight(mmsi=7, n=181, speed=9.0, cog=10.0)
    shift = 3000.0 / 111_195.0
    r.lat[90:92] += shift
    labels, cleaned = detect_mmsi_duplication({7: track(r)}, CFG)
    assert not any(l.kind is ArtifactKind.MMSI_DUPLICATION for l in labels)
    assert len(cleaned[7]) == len(r)


def test_run_stage1_stale_only():
    r = straight(mmsi=3, n=181)
    picks = [20, 70, 140]
    rb = r.take(picks).copy()
    rb.t += 57_020
    recs = Records.concat([r, rb])
    out, rep = run_stage1(recs, CFG)
    assert (rep.stale_points, rep.duplication_points) == (3, 0)
    assert out == r.sorted()


def test_run_stage1_clean_identity():
    recs = Records.concat([straight(mmsi=1, n=121), turning(mmsi=2, n=121, lat0=34.5)])
    out, rep = run_stage1(recs, CFG)
    assert (rep.stale_points, rep.duplication_points) == (0, 0)
    assert out == recs.sorted()


def test_run_stage1_matches_synthetic_truth():
    from aisgnss.synth import artifact_scenario, synthesize

    recs, truth = synthesize(artifact_scenario(seed=4, n_background=6, days=2))
    out, rep = run_stage1(recs, CFG)
    counts = truth.label_counts()
    assert rep.stale_points == counts["stale_retransmission"]
    assert rep.duplication_points == counts["mmsi_duplication"]
    remaining = {(int(m), int(t)) for m, t in zip(out.mmsi, out.t)}
    assert not any(truth.labels.get(k) in ("stale_retransmission", "mmsi_duplication") for k in remaining)


def test_mapper_does_not_change_result():
    recs = Records.concat([straight(mmsi=1, n=121), straight(mmsi=2, n=121, lat0=35.0)])
    a = run_stage1(recs, CFG)
    b = run_stage1(recs, CFG, mapper=lambda f, xs: [f(x) for x in reversed(list(xs))][::-1])
    assert a[0] == b[0] and a[1] == b[1]


def brute_track_dbscan(t, lat, lon, sog, hdg, eps_space, eps_time_ms, eps_speed, eps_heading, min_pts):
    from aisgnss.geo import angle_diff_deg, haversine_m
    n = len(t)
    nb = [[j for j in range(n) if j != i and abs(t[j] - t[i]) < eps_time_ms
           and abs(sog[i] - sog[j]) < eps_speed and angle_diff_deg(hdg[i], hdg[j]) < eps_heading
           and haversine_m(lat[i], lon[i], lat[j], lon[j]) < eps_space] for i in range(n)]
    core = [len(x) + 1 >= min_pts for x in nb]
    labels = [-1] * n
    nl = 0
    for i in range(n):
        if core[i] and labels[i] < 0:
            stack, labels[i] = [i], nl
            while stack:
                for k in nb[stack.pop()]:
                    if core[k] and labels[k] < 0:
                        labels[k] = nl
                        stack.append(k)
            nl += 1
    for i in range(n):
        if not core[i]:
            c = [labels[k] for k in nb[i] if core[k]]
            labels[i] = min(c) if c else -1
    return labels


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 120), st.integers(1, 7))
def test_track_dbscan_matches_brute_force(seed, n, min_pts):
    from aisgnss.comm_integrity import track_dbscan
    rng = np.random.default_rng(seed)
    t = np.sort(rng.integers(0, 3_000_000, n)).astype(np.int64)
    lat = 34.0 + rng.uniform(0, 0.05, n)
    lon = 128.0 + rng.uniform(0, 0.05, n)
    sog = rng.uniform(0, 6, n)
    hdg = rng.uniform(0, 360, n)
    args = (t, lat, lon, sog, hdg, 3600.0, 900_000, 2.0, 90.0, min_pts)
    assert track_dbscan(*args).tolist() == brute_track_dbscan(*args)
