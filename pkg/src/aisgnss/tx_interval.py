"""Stage 2 transmission-continuity cues: per-vessel reporting gaps."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import PipelineConfig
from .geo import GeoPos
from .ingest import Track

MIN_QUALIFYING_INTERVALS = 4


@dataclass(frozen=True)
class TxProfile:
    mmsi: int
    median_interval: float
    threshold: float
    n_samples: int


@dataclass(frozen=True)
class GapCue:
    mmsi: int
    gap_start_t: int
    gap_end_t: int
    T_k: float
    pos: GeoPos
    midpoint_t: int


def _moving_intervals(track: Track, sog_normal_min: float) -> np.ndarray:
    r = track.records
    if len(r) < 2:
        return np.zeros(0)
    moving = r.sog > sog_normal_min
    ok = moving[1:] & moving[:-1]
    return np.diff(r.t)[ok] / 1000.0


def median_reporting_interval(track: Track, sog_normal_min: float = 1.0) -> float | None:
    """Median interval between consecutive reports that are both underway;
    None when fewer than four such intervals exist."""
    iv = _moving_intervals(track, sog_normal_min)
    if len(iv) < MIN_QUALIFYING_INTERVALS:
        return None
    return float(np.median(iv))


def jamming_threshold(median_interval: float, kappa: float = 3.0, t_min: float = 60.0) -> float:
    if not median_interval > 0:
        raise ValueError("median interval must be positive")
    return max(t_min, kappa * median_interval)


def tx_profile(track: Track, cfg: PipelineConfig) -> TxProfile | None:
    iv = _moving_intervals(track, cfg.sog_normal_min)
    if len(iv) < MIN_QUALIFYING_INTERVALS:
        return None
    med = float(np.median(iv))
    if med <= 0:
        return None
    return TxProfile(track.mmsi, med, jamming_threshold(med, cfg.kappa, cfg.t_min), len(iv))


def gap_indices(t: np.ndarray, threshold_s: float) -> np.ndarray:
    """Indices k such that t[k+1] - t[k] strictly exceeds the threshold."""
    return np.nonzero(np.diff(t) > threshold_s * 1000.0)[0]


def extract_gap_cues(track: Track, profile: TxProfile | None) -> list[GapCue]:
    """One cue per interior interval longer than the profile threshold, anchored
    at the last fix before the gap and timed at the gap midpoint."""
    if profile is None:
        return []
    r = track.records
    out = []
    for k in gap_indices(r.t, profile.threshold):
        a, b = int(r.t[k]), int(r.t[k + 1])
        out.append(GapCue(track.mmsi, a, b, (b - a) / 1000.0,
                          GeoPos(float(r.lat[k]), float(r.lon[k])), a + (b - a) // 2))
    return out
