"""Stage 1: communication-integrity diagnostics.

Two AIS-chain artifacts are found and removed before any GNSS interpretation:
stale-data retransmission (a navigation tuple re-sent later with a new
timestamp) and concurrent MMSI duplication (two physically separate emitters
sharing one identifier). Nothing else is removed here.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from numba import njit

from .config import PipelineConfig
from .geo import angle_diff_deg, haversine_m
from .imm import has_kinematic_cue
from .ingest import Records, Track, mmsi_order, partition_by_mmsi


class ArtifactKind(str, Enum):
    MMSI_DUPLICATION = "mmsi_duplication"
    STALE_RETRANSMISSION = "stale_retransmission"
    TRUE_TRACK = "true_track"


@dataclass(frozen=True)
class CommArtifactLabel:
    kind: ArtifactKind
    mmsi: int
    indices: np.ndarray  # positions in the owning track

    def __len__(self) -> int:
        return len(self.indices)


@dataclass
class SubTrack:
    mmsi: int
    indices: np.ndarray
    records: Records
    is_normal: bool | None = None  # None: not yet validated

    @property
    def t_first(self) -> int:
        return int(self.records.t[0])

    @property
    def t_last(self) -> int:
        return int(self.records.t[-1])

    @property
    def duration(self) -> float:
        return (self.t_last - self.t_first) / 1000.0

    def overlaps(self, other: "SubTrack") -> bool:
        return self.t_first <= other.t_last and other.t_first <= self.t_last


# --- stale-data retransmission ----------------------------------------------


def detect_stale_retransmission(track: Track) -> set[int]:
    """Indices of records repeating an earlier (lat, lon, sog, cog) tuple at a
    different timestamp. The map keeps the latest timestamp per tuple."""
    r = track.records
    seen: dict[tuple, int] = {}
    flagged = set()
    for i, key in enumerate(zip(r.lat.tolist(), r.lon.tolist(), r.sog.tolist(), r.cog.tolist())):
        t = int(r.t[i])
        prev = seen.get(key)
        if prev is not None and prev != t:
            flagged.add(i)
        seen[key] = t
    return flagged


# --- sub-track extraction ------------------------------------------------------


@njit(cache=True)
def _find(parent, i):
    while parent[i] != i:
        parent[i] = parent[parent[i]]
        i = parent[i]
    return i


@njit(cache=True)
def _neighbors(i, j, lat, lon, sog, hdg, eps_space, eps_speed, eps_heading):
    if abs(sog[i] - sog[j]) >= eps_speed:
        return False
    if angle_diff_deg(hdg[i], hdg[j]) >= eps_heading:
        return False
    return haversine_m(lat[i], lon[i], lat[j], lon[j]) < eps_space


@njit(cache=True)
def track_dbscan(t, lat, lon, sog, hdg, eps_space, eps_time_ms, eps_speed, eps_heading, min_pts):
    """Density clustering of one time-sorted track. Returns labels (-1 = noise)
    numbered in time order of each cluster's earliest core record."""
    n = len(t)
    need = min_pts - 1
    core = np.zeros(n, dtype=np.bool_)
    for i in range(n):
        # core test stops as soon as enough neighbors are seen
        cnt = 0
        j = i - 1
        while cnt < need and j >= 0 and t[i] - t[j] < eps_time_ms:
            if _neighbors(i, j, lat, lon, sog, hdg, eps_space, eps_speed, eps_heading):
                cnt += 1
            j -= 1
        j = i + 1
        while cnt < need and j < n and t[j] - t[i] < eps_time_ms:
            if _neighbors(i, j, lat, lon, sog, hdg, eps_space, eps_speed, eps_heading):
                cnt += 1
            j += 1
        core[i] = cnt >= need
    parent = np.arange(n)
    for i in range(n):
        if not core[i]:
            continue
        j = i + 1
        while j < n and t[j] - t[i] < eps_time_ms:
            if core[j]:
                a = _find(parent, i)
                b = _find(parent, j)
                if a != b and _neighbors(i, j, lat, lon, sog, hdg, eps_space, eps_speed, eps_heading):
                    if a < b:
                        parent[b] = a
                    else:
                        parent[a] = b
            j += 1
    labels = np.full(n, -1, dtype=np.int64)
    root_label = np.full(n, -1, dtype=np.int64)
    nl = 0
    for i in range(n):
        if core[i]:
            r = _find(parent, i)
            if root_label[r] < 0:
                root_label[r] = nl
                nl += 1
            labels[i] = root_label[r]
    for i in range(n):
        if core[i]:
            continue
        best = -1
        j = i - 1
        while j >= 0 and t[i] - t[j] < eps_time_ms:
            if core[j] and (best < 0 or labels[j] < best):
                if _neighbors(i, j, lat, lon, sog, hdg, eps_space, eps_speed, eps_heading):
                    best = labels[j]
            j -= 1
        j = i + 1
        while j < n and t[j] - t[i] < eps_time_ms:
            if core[j] and (best < 0 or labels[j] < best):
                if _neighbors(i, j, lat, lon, sog, hdg, eps_space, eps_speed, eps_heading):
                    best = labels[j]
            j += 1
        labels[i] = best
    return labels


def _bearing_column(r: Records) -> np.ndarray:
    return np.where(np.isnan(r.heading), r.cog, r.heading)


def extract_subtracks(track: Track, cfg: PipelineConfig) -> list[SubTrack]:
    """Split a track into kinematically coherent sub-tracks of at least
    ``subtrack_min_duration`` seconds."""
    r = track.records
    if len(r) == 0:
        return []
    labels = track_dbscan(
        r.t, r.lat, r.lon, r.sog, _bearing_column(r), cfg.eps_space_dup,
        int(round(cfg.eps_time_dup * 1000)), cfg.eps_speed_dup, cfg.eps_heading_dup, cfg.min_pts,
    )
    out = []
    for lab in range(labels.max() + 1 if len(labels) else 0):
        idx = np.nonzero(labels == lab)[0]
        sub = SubTrack(track.mmsi, idx, r.take(idx))
        if sub.duration >= cfg.subtrack_min_duration:
            out.append(sub)
    out.sort(key=lambda s: (s.t_first, int(s.indices[0])))
    return out


def validate_subtrack_normal(subtrack: SubTrack, cfg: PipelineConfig) -> bool:
    """True iff the IMM screen raises no kinematic cue on the sub-track."""
    if len(subtrack.records) < 3:
        return False
    return not has_kinematic_cue(subtrack.records, cfg)


def _overlap_groups(subs: list[SubTrack]) -> list[list[SubTrack]]:
    """Connected components of the closed-interval overlap relation."""
    groups: list[list[SubTrack]] = []
    end = None
    for s in sorted(subs, key=lambda s: (s.t_first, s.t_last)):
        if groups and s.t_first <= end:
            groups[-1].append(s)
            end = max(end, s.t_last)
        else:
            groups.append([s])
            end = s.t_last
    return groups


def _kinematic_chains(sub: SubTrack, cfg: PipelineConfig) -> list[SubTrack]:
    """Re-split one sub-track into chains of mutually reachable fixes (implied
    speed <= v_th between consecutive members). A fix extends the feasible
    chain whose last member is most recent, so a short burst of displaced
    fixes cannot capture the real track later on."""
    r = sub.records
    t, lat, lon = r.t, r.lat, r.lon
    horizon = cfg.eps_time_dup * 1000
    chains: list[list[int]] = []
    active: list[int] = []
    for k in range(len(t)):
        best, best_key = -1, (math.inf, math.inf)
        still = []
        for c in active:
            last = chains[c][-1]
            gap = t[k] - t[last]
            if gap >= horizon:
                continue
            still.append(c)
            if gap <= 0:
                continue
            speed = haversine_m(lat[last], lon[last], lat[k], lon[k]) / (gap / 1000.0)
            if speed <= cfg.v_th and (gap, speed) < best_key:
                best, best_key = c, (gap, speed)
        active = still
        if best < 0:
            chains.append([k])
            active.append(len(chains) - 1)
        else:
            chains[best].append(k)
    out = []
    for ch in chains:
        idx = np.asarray(ch)
        piece = SubTrack(sub.mmsi, sub.indices[idx], r.take(idx))
        if len(idx) >= 3 and piece.duration >= cfg.subtrack_min_duration:
            out.append(piece)
    return out


def _decide_group(group: list[SubTrack], cfg: PipelineConfig) -> tuple[list[SubTrack], list[SubTrack]]:
    """Return (duplication sub-tracks, true-track sub-tracks) for one group."""
    for s in group:
        if s.is_normal is None:
            s.is_normal = validate_subtrack_normal(s, cfg)
    normal = [s for s in group if s.is_normal]
    if len(normal) >= 2:
        return list(group), []
    if len(normal) == 1:
        return [s for s in group if s is not normal[0]], normal
    if len(group) == 1:
        # single-vessel cluster: look for interleaved emitters inside it
        chains = _kinematic_chains(group[0], cfg)
        good = [c for c in chains if validate_subtrack_normal(c, cfg)]
        if any(a.overlaps(b) for i, a in enumerate(good) for b in good[i + 1:]):
            return list(group), []
    return [], []


def mmsi_duplication_track(track: Track, cfg: PipelineConfig) -> list[CommArtifactLabel]:
    subs = extract_subtracks(track, cfg)
    dup_idx, true_idx = [], []
    for group in _overlap_groups(subs):
        dup, true = _decide_group(group, cfg)
        dup_idx.extend(s.indices for s in dup)
        true_idx.extend(s.indices for s in true)
    labels = []
    if dup_idx:
        labels.append(CommArtifactLabel(ArtifactKind.MMSI_DUPLICATION, track.mmsi, np.sort(np.concatenate(dup_idx))))
    if true_idx:
        labels.append(CommArtifactLabel(ArtifactKind.TRUE_TRACK, track.mmsi, np.sort(np.concatenate(true_idx))))
    return labels


def detect_mmsi_duplication(
    tracks: dict[int, Track], cfg: PipelineConfig
) -> tuple[list[CommArtifactLabel], dict[int, Track]]:
    """Label duplicated-identity sub-tracks and return tracks without them.

    Per overlap group of sub-tracks: two or more normal sub-tracks mark the
    whole group as duplication; exactly one normal sub-track becomes the true
    track and the rest are duplication; otherwise everything is kept.
    """
    labels: list[CommArtifactLabel] = []
    cleaned: dict[int, Track] = {}
    for mmsi, track in tracks.items():
        lab = mmsi_duplication_track(track, cfg)
        labels.extend(lab)
        drop = [l.indices for l in lab if l.kind is ArtifactKind.MMSI_DUPLICATION]
        if drop:
            keep = np.ones(len(track), dtype=bool)
            keep[np.concatenate(drop)] = False
            if keep.any():
                cleaned[mmsi] = Track(mmsi, track.records.take(keep))
        else:
            cleaned[mmsi] = track
    return labels, cleaned


# --- stage driver --------------------------------------------------------------


@dataclass
class Stage1Report:
    stale_points: int = 0
    stale_mmsis: int = 0
    duplication_points: int = 0
    duplication_mmsis: int = 0
    output_points: int = 0
    output_mmsis: int = 0

    def merge(self, other: "Stage1Report") -> None:
        for f in ("stale_points", "stale_mmsis", "duplication_points", "duplication_mmsis",
                  "output_points", "output_mmsis"):
            setattr(self, f, getattr(self, f) + getattr(other, f))


def stage1_track(track: Track, cfg: PipelineConfig) -> tuple[np.ndarray, Stage1Report]:
    """Stale removal then duplication removal on one MMSI; returns the keep mask
    over the input track and the per-track counts."""
    rep = Stage1Report()
    n = len(track)
    keep = np.ones(n, dtype=bool)
    stale = detect_stale_retransmission(track)
    if stale:
        keep[list(stale)] = False
        rep.stale_points, rep.stale_mmsis = len(stale), 1
    pos = np.nonzero(keep)[0]
    work = Track(track.mmsi, track.records.take(pos)) if stale else track
    dup = [l for l in mmsi_duplication_track(work, cfg) if l.kind is ArtifactKind.MMSI_DUPLICATION]
    if dup:
        drop = pos[np.concatenate([l.indices for l in dup])]
        keep[drop] = False
        rep.duplication_points, rep.duplication_mmsis = len(drop), 1
    rep.output_points = int(keep.sum())
    rep.output_mmsis = int(rep.output_points > 0)
    return keep, rep


def run_stage1(records: Records, cfg: PipelineConfig, mapper=map) -> tuple[Records, Stage1Report]:
    """Apply both diagnostics per MMSI. ``mapper`` may be a parallel map; the
    result does not depend on it."""
    order = mmsi_order(records)
    tracks = list(partition_by_mmsi(records, order).values())
    report = Stage1Report()
    keep = np.zeros(len(records), dtype=bool)
    pos = 0
    for track, (k, rep) in zip(tracks, mapper(_stage1_job, [(t, cfg) for t in tracks])):
        report.merge(rep)
        keep[order[pos:pos + len(track)][k]] = True
        pos += len(track)
    del tracks
    return records.take(keep).sorted(), report


def _stage1_job(args):
    return stage1_track(*args)
