import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from aisgnss.config import PipelineConfig
from aisgnss.ingest import Records, Track, parse_timestamp
from aisgnss.tx_interval import (
    extract_gap_cues,
    gap_indices,
    jamming_threshold,
    median_reporting_interval,
    tx_profile,
)
from oracles import median_by_sorting
from trackgen import T0

CFG = PipelineConfig()


def at_times(t_ms, sog=8.0) -> Track:
    t = np.asarray(t_ms, dtype=np.int64)
    n = len(t)
    lat = 34.0 + 1e-5 * np.arange(n)
    return Track(1, Records(np.ones(n), t, lat, np.full(n, 128.0), np.full(n, sog), np.zeros(n)))


def cadence(intervals_s, sog=8.0) -> Track:
    return at_times(T0 + np.concatenate(([0], np.cumsum(np.asarray(intervals_s) * 1000))).astype(np.int64), sog)


def test_median_example():
    assert median_reporting_interval(cadence([10, 10, 10, 12, 10])) == 10.0


def test_stationary_vessel_has_no_profile():
    assert median_reporting_interval(cadence([10] * 20, sog=0.2)) is None
    assert tx_profile(cadence([10] * 20, sog=0.2), CFG) is None


@given(st.lists(st.integers(1, 600), min_size=4, max_size=60))
def test_median_matches_sorting_oracle(iv):
    assert median_reporting_interval(cadence(iv)) == pytest.approx(median_by_sorting(iv))


@pytest.mark.parametrize("med,expected", [(10, 60), (20, 60), (30, 90)])
def test_threshold_truth_table(med, expected):
    assert jamming_threshold(med, 3.0, 60.0) == expected


@given(st.floats(0.01, 1e4), st.floats(0.1, 10), st.floats(1, 600))
def test_threshold_lower_bounds(med, kappa, t_min):
    th = jamming_threshold(med, kappa, t_min)
    assert th >= t_min and th >= kappa * med


def test_one_hole():
    tr = cadence([10] * 30 + [300] + [10] * 30)
    cues = extract_gap_cues(tr, tx_profile(tr, CFG))
    assert len(cues) == 1 and cues[0].T_k == 300.0
    assert cues[0].midpoint_t == cues[0].gap_start_t + 150_000


def test_no_cue_below_threshold():
    tr = cadence([10] * 30 + [45] + [10] * 30)
    assert extract_gap_cues(tr, tx_profile(tr, CFG)) == []


def test_exact_threshold_is_not_a_gap():
    assert len(gap_indices(np.array([0, 60_000, 120_001]), 60.0)) == 1


def test_double_pulse_outage():
    day = "2024-11-01T"

    def ts(hms):
        return parse_timestamp(day + hms + "Z")

    seg1 = np.arange(ts("21:50:02"), ts("21:56:42") + 1, 10_000)
    seg2 = np.append(np.arange(ts("22:00:00"), ts("22:06:50") + 1, 10_000), ts("22:07:03"))
    seg3 = np.arange(ts("22:10:10"), ts("22:20:10") + 1, 10_000)
    tr = at_times(np.concatenate([seg1, seg2, seg3]))
    cues = extract_gap_cues(tr, tx_profile(tr, CFG))
    assert [(c.gap_start_t, c.gap_end_t) for c in cues] == [(ts("21:56:42"), ts("22:00:00")),
                                                            (ts("22:07:03"), ts("22:10:10"))]
    assert [c.T_k for c in cues] == [198.0, 187.0]


@given(st.lists(st.integers(1, 400), min_size=5, max_size=80))
def test_cue_count_matches_brute_force(iv):
    tr = cadence(iv)
    prof = tx_profile(tr, CFG)
    cues = extract_gap_cues(tr, prof)
    th = max(60.0, 3.0 * median_by_sorting(iv))
    assert len(cues) == sum(1 for x in iv if x > th)
    for c in cues:
        assert c.gap_start_t < c.midpoint_t < c.gap_end_t
