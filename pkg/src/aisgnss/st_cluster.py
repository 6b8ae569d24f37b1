"""Stage 3: spatiotemporal density clustering of anomaly cues and categorization.

Kinematic cues and transmission-gap cues are clustered in separate passes.
Multi-vessel clusters that pass the vessel-count and anomalous-ratio gates
become spoofing (kinematic) or jamming (gap) events; single-vessel kinematic
clusters become persistent or transient sensor artifacts by recurrence.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from numba import njit

from .config import PipelineConfig
from .geo import EARTH_RADIUS_M, GeoPos, haversine_array, haversine_m, lon_span_for_distance
from .imm import KinematicCue
from .ingest import Records
from .tx_interval import GapCue

DAY_MS = 86_400_000


class CueKind(str, Enum):
    KINEMATIC = "kinematic"
    TX_GAP = "tx_gap"


class Category(str, Enum):
    NOISE = "noise"
    PERSISTENT_SENSOR = "persistent_sensor"
    TRANSIENT_SENSOR = "transient_sensor"
    SPOOFING = "spoofing"
    JAMMING = "jamming"


INTERFERENCE = (Category.SPOOFING, Category.JAMMING)


@dataclass(frozen=True)
class AnomalyCue:
    kind: CueKind
    mmsi: int
    t: int
    pos: GeoPos
    payload: KinematicCue | GapCue | None = None

    def __post_init__(self):
        if self.payload is not None:
            expected = KinematicCue if self.kind is CueKind.KINEMATIC else GapCue
            if not isinstance(self.payload, expected):
                raise ValueError(f"{self.kind.value} cue carries a {type(self.payload).__name__}")

    @classmethod
    def from_kinematic(cls, c: KinematicCue) -> "AnomalyCue":
        return cls(CueKind.KINEMATIC, c.mmsi, c.t, c.pos, c)

    @classmethod
    def from_gap(cls, c: GapCue) -> "AnomalyCue":
        return cls(CueKind.TX_GAP, c.mmsi, c.midpoint_t, c.pos, c)


class CueSet:
    """Column store of one kind of cue. ``value`` holds implied speed for
    kinematic cues and gap length (s) for gap cues."""

    __slots__ = ("kind", "mmsi", "t", "lat", "lon", "value")

    def __init__(self, kind: CueKind, mmsi, t, lat, lon, value=None):
        self.kind = CueKind(kind)
        self.mmsi = np.asarray(mmsi, dtype=np.int64)
        self.t = np.asarray(t, dtype=np.int64)
        self.lat = np.asarray(lat, dtype=np.float64)
        self.lon = np.asarray(lon, dtype=np.float64)
        self.value = np.zeros(len(self.mmsi)) if value is None else np.asarray(value, dtype=np.float64)

    @classmethod
    def from_cues(cls, kind: CueKind, cues: Iterable[AnomalyCue | KinematicCue | GapCue]) -> "CueSet":
        rows = []
        for c in cues:
            if isinstance(c, KinematicCue):
                rows.append((c.mmsi, c.t, c.pos.lat, c.pos.lon, c.implied_speed))
            elif isinstance(c, GapCue):
                rows.append((c.mmsi, c.midpoint_t, c.pos.lat, c.pos.lon, c.T_k))
            else:
                v = 0.0
                if isinstance(c.payload, KinematicCue):
                    v = c.payload.implied_speed
                elif isinstance(c.payload, GapCue):
                    v = c.payload.T_k
                rows.append((c.mmsi, c.t, c.pos.lat, c.pos.lon, v))
        if not rows:
            return cls.empty(kind)
        cols = list(zip(*rows))
        return cls(kind, *cols)

    @classmethod
    def empty(cls, kind: CueKind) -> "CueSet":
        return cls(kind, [], [], [], [], [])

    @classmethod
    def concat(cls, kind: CueKind, parts: Sequence["CueSet"]) -> "CueSet":
        if not parts:
            return cls.empty(kind)
        return cls(kind, *(np.concatenate([getattr(p, f) for p in parts]) for f in cls.__slots__[1:]))

    def __len__(self) -> int:
        return len(self.mmsi)

    def take(self, idx) -> "CueSet":
        return CueSet(self.kind, *(getattr(self, f)[idx] for f in self.__slots__[1:]))

    def canonical_order(self) -> np.ndarray:
        return np.lexsort((self.value, self.lon, self.lat, self.mmsi, self.t))


# --- neighborhoods and clustering ------------------------------------------------


def st_neighbors(i: int, universe: CueSet, eps_s: float, eps_t: float) -> set[int]:
    """All j != i with distance < eps_s meters and |dt| < eps_t seconds."""
    d = haversine_array(universe.lat[i], universe.lon[i], universe.lat, universe.lon)
    dt = np.abs(universe.t - universe.t[i])
    m = (d < eps_s) & (dt < eps_t * 1000.0)
    m[i] = False
    return set(np.nonzero(m)[0].tolist())


@njit(cache=True)
def _cell_keys(lat, lon, t, dlat, dlon, nj, tbucket):
    n = len(lat)
    ci = np.empty(n, dtype=np.int64)
    cj = np.empty(n, dtype=np.int64)
    ck = np.empty(n, dtype=np.int64)
    for i in range(n):
        ci[i] = int(math.floor((lat[i] + 90.0) / dlat))
        cj[i] = int(math.floor((lon[i] + 180.0) / dlon)) % nj
        ck[i] = t[i] // tbucket
    return ci, cj, ck


@njit(cache=True)
def _grid_neighbors(i, lat, lon, t, eps_s, eps_t, ci, cj, ck, ci0, ck0, nci, nj, nck,
                    cell_keys, cell_start, cell_end, order, out):
    """Fill ``out`` with neighbor indices of i (excluding i); return count."""
    cnt = 0
    seen_j = np.empty(3, dtype=np.int64)
    nseen = 0
    for dj in (-1, 0, 1):
        jj = (cj[i] + dj) % nj
        dup = False
        for s in range(nseen):
            if seen_j[s] == jj:
                dup = True
        if dup:
            continue
        seen_j[nseen] = jj
        nseen += 1
        for di in (-1, 0, 1):
            ii = ci[i] + di - ci0
            if ii < 0 or ii >= nci:
                continue
            for dk in (-1, 0, 1):
                kk = ck[i] + dk - ck0
                if kk < 0 or kk >= nck:
                    continue
                key = (ii * nj + jj) * nck + kk
                pos = np.searchsorted(cell_keys, key)
                if pos >= len(cell_keys) or cell_keys[pos] != key:
                    continue
                for q in range(cell_start[pos], cell_end[pos]):
                    j = order[q]
                    if j == i:
                        continue
                    if abs(t[i] - t[j]) >= eps_t:
                        continue
                    if haversine_m(lat[i], lon[i], lat[j], lon[j]) < eps_s:
                        out[cnt] = j
                        cnt += 1
    return cnt


@njit(cache=True)
def _find(parent, i):
    while parent[i] != i:
        parent[i] = parent[parent[i]]
        i = parent[i]
    return i


@njit(cache=True)
def _grid_dbscan(lat, lon, t, eps_s, eps_t, min_pts, dlat, dlon, nj):
    """DBSCAN with the strict space/time neighborhood. Point index order is the
    processing order: clusters are numbered by their earliest core point and a
    border point joins the lowest-numbered adjacent cluster."""
    n = len(lat)
    labels = np.full(n, -1, dtype=np.int64)
    if n == 0:
        return labels
    ci, cj, ck = _cell_keys(lat, lon, t, dlat, dlon, nj, eps_t)
    ci0, ck0 = ci.min(), ck.min()
    nci = ci.max() - ci0 + 1
    nck = ck.max() - ck0 + 1
    keys = ((ci - ci0) * nj + cj) * nck + (ck - ck0)
    order = np.argsort(keys, kind="mergesort")
    sk = keys[order]
    brk = np.empty(n, dtype=np.bool_)
    brk[0] = True
    for q in range(1, n):
        brk[q] = sk[q] != sk[q - 1]
    starts = np.nonzero(brk)[0]
    cell_keys = sk[starts]
    cell_start = starts
    cell_end = np.empty(len(starts), dtype=np.int64)
    cell_end[:-1] = starts[1:]
    cell_end[-1] = n
    buf = np.empty(n, dtype=np.int64)

    core = np.zeros(n, dtype=np.bool_)
    for i in range(n):
        c = _grid_neighbors(i, lat, lon, t, eps_s, eps_t, ci, cj, ck, ci0, ck0, nci, nj, nck,
                            cell_keys, cell_start, cell_end, order, buf)
        core[i] = c + 1 >= min_pts
    parent = np.arange(n)
    for i in range(n):
        if not core[i]:
            continue
        c = _grid_neighbors(i, lat, lon, t, eps_s, eps_t, ci, cj, ck, ci0, ck0, nci, nj, nck,
                            cell_keys, cell_start, cell_end, order, buf)
        for q in range(c):
            j = buf[q]
            if core[j]:
                a = _find(parent, i)
                b = _find(parent, j)
                if a < b:
                    parent[b] = a
                elif b < a:
                    parent[a] = b
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
        c = _grid_neighbors(i, lat, lon, t, eps_s, eps_t, ci, cj, ck, ci0, ck0, nci, nj, nck,
                            cell_keys, cell_start, cell_end, order, buf)
        best = -1
        for q in range(c):
            j = buf[q]
            if core[j] and (best < 0 or labels[j] < best):
                best = labels[j]
        labels[i] = best
    return labels


def st_dbscan(cues: CueSet | Sequence[AnomalyCue], eps_s: float, eps_t: float, min_pts: int) -> np.ndarray:
    """Cluster labels aligned with the input (-1 = noise).

    Processing order is canonical (t, mmsi, lat, lon), so labels do not depend
    on input order. A cue is core when it has at least ``min_pts - 1``
    neighbors.
    """
    if not isinstance(cues, CueSet):
        cues = list(cues)
        kind = cues[0].kind if cues else CueKind.KINEMATIC
        cues = CueSet.from_cues(kind, cues)
    n = len(cues)
    if n == 0:
        return np.zeros(0, dtype=np.int64)
    order = cues.canonical_order()
    lat, lon, t = cues.lat[order], cues.lon[order], cues.t[order]
    dlat = math.degrees(eps_s / EARTH_RADIUS_M) * (1 + 1e-9)
    max_abs = float(np.max(np.abs(lat)))
    span = lon_span_for_distance(eps_s, max_abs) * (1 + 1e-9)
    nj = max(1, int(math.floor(360.0 / span))) if span < 360 else 1
    dlon = 360.0 / nj
    eps_t_ms = int(math.ceil(eps_t * 1000.0))
    if eps_t * 1000.0 != eps_t_ms:
        # strict |dt| < eps_t on integer ms
        eps_t_ms = int(math.floor(eps_t * 1000.0)) + 1
    sorted_labels = _grid_dbscan(lat, lon, t, float(eps_s), eps_t_ms, int(min_pts), dlat, dlon, nj)
    labels = np.empty(n, dtype=np.int64)
    labels[order] = sorted_labels
    return labels


# --- context for categorization ---------------------------------------------------


class TrafficIndex:
    """Time-sorted view of all retained reports, answering which MMSIs report
    inside a lat/lon box during a time window (bounds inclusive)."""

    def __init__(self, records: Records):
        t = records.t
        if len(t) > 1 and np.any(t[1:] < t[:-1]):
            order = np.argsort(t, kind="stable")
            records = records.take(order)
        self.t = records.t
        self.lat = records.lat
        self.lon = records.lon
        self.mmsi = records.mmsi

    def __len__(self) -> int:
        return len(self.t)

    def present_mmsis(self, lat_min, lat_max, lon_min, lon_max, t0, t1) -> np.ndarray:
        a = np.searchsorted(self.t, t0, side="left")
        b = np.searchsorted(self.t, t1, side="right")
        lat, lon = self.lat[a:b], self.lon[a:b]
        m = (lat >= lat_min) & (lat <= lat_max) & (lon >= lon_min) & (lon <= lon_max)
        return np.unique(self.mmsi[a:b][m])


@dataclass
class MmsiHistory:
    """Operational days per MMSI and days with qualifying single-vessel clusters."""

    operational_days: dict[int, int] = field(default_factory=dict)
    qualifying_days: dict[int, set[int]] = field(default_factory=dict)

    @classmethod
    def from_records(cls, records: Records) -> "MmsiHistory":
        if len(records) == 0:
            return cls()
        days = records.t // DAY_MS
        pairs = np.unique(np.stack([records.mmsi, days], axis=1), axis=0)
        m, c = np.unique(pairs[:, 0], return_counts=True)
        return cls({int(a): int(b) for a, b in zip(m, c)})

    def recurrence(self, mmsi: int) -> float:
        ops = self.operational_days.get(mmsi, 0)
        q = len(self.qualifying_days.get(mmsi, ()))
        return q / ops if ops else 1.0


class Coastline:
    """Polygons (WGS-84) used to split coastal from offshore clusters."""

    def __init__(self, polygons):
        self.polygons = list(polygons)

    @classmethod
    def load(cls, path: str | Path) -> "Coastline":
        from shapely.geometry import shape

        doc = json.loads(Path(path).read_text(encoding="utf-8"))
        if doc.get("type") != "FeatureCollection":
            raise ValueError("coastline file must be a GeoJSON FeatureCollection")
        polys = []
        for feat in doc.get("features", []):
            g = shape(feat["geometry"])
            if g.geom_type not in ("Polygon", "MultiPolygon"):
                raise ValueError(f"coastline geometry must be polygonal, got {g.geom_type}")
            polys.append(g)
        return cls(polys)

    def distance_m(self, pos: GeoPos) -> float:
        from shapely.geometry import Point
        from shapely.ops import transform

        lat0 = math.radians(pos.lat)
        kx = EARTH_RADIUS_M * math.pi / 180.0 * math.cos(lat0)
        ky = EARTH_RADIUS_M * math.pi / 180.0

        def to_plane(x, y, z=None):
            return (np.asarray(x) - pos.lon) * kx, (np.asarray(y) - pos.lat) * ky

        origin = Point(0.0, 0.0)
        return min((transform(to_plane, p).distance(origin) for p in self.polygons), default=math.inf)


def is_coastal(pos: GeoPos, cfg: PipelineConfig, coastline: Coastline | None) -> bool:
    if coastline is None:
        return True
    return coastline.distance_m(pos) <= cfg.coastal_distance_m


# --- events -----------------------------------------------------------------------


@dataclass
class StEvent:
    cluster_id: int
    cue_kind: CueKind
    members: np.ndarray
    mmsis: tuple[int, ...]
    t_start: int
    t_end: int
    centroid: GeoPos
    radius_m: float
    anomalous_ratio: float = 0.0
    n_present: int = 0
    category: Category = Category.NOISE
    coastal: bool = True

    @property
    def distinct_mmsis(self) -> int:
        return len(self.mmsis)

    @property
    def duration(self) -> float:
        return (self.t_end - self.t_start) / 1000.0

    @property
    def days(self) -> range:
        return range(self.t_start // DAY_MS, self.t_end // DAY_MS + 1)


def build_event(cluster_id: int, cues: CueSet, members: np.ndarray) -> StEvent:
    lat, lon = cues.lat[members], cues.lon[members]
    c = GeoPos(float(lat.mean()), float(lon.mean()))
    radius = float(haversine_array(c.lat, c.lon, lat, lon).max())
    return StEvent(
        cluster_id=cluster_id,
        cue_kind=cues.kind,
        members=members,
        mmsis=tuple(int(m) for m in np.unique(cues.mmsi[members])),
        t_start=int(cues.t[members].min()),
        t_end=int(cues.t[members].max()),
        centroid=c,
        radius_m=radius,
    )


def anomalous_ratio(event: StEvent, cues: CueSet, traffic: TrafficIndex, cfg: PipelineConfig) -> tuple[float, int]:
    """Cue-contributing MMSIs over MMSIs reporting in the event's box widened
    by eps_s and time span widened by eps_t."""
    lat, lon = cues.lat[event.members], cues.lon[event.members]
    dlat = math.degrees(cfg.eps_s / EARTH_RADIUS_M)
    lat_min, lat_max = lat.min() - dlat, lat.max() + dlat
    dlon = lon_span_for_distance(cfg.eps_s, max(abs(lat_min), abs(lat_max)))
    present = traffic.present_mmsis(
        lat_min, lat_max, lon.min() - dlon, lon.max() + dlon,
        event.t_start - int(cfg.eps_t * 1000), event.t_end + int(cfg.eps_t * 1000),
    )
    n_present = len(set(present.tolist()) | set(event.mmsis))
    return event.distinct_mmsis / n_present, n_present


def classify_cluster(event: StEvent, traffic: TrafficIndex | None, history: MmsiHistory,
                     cfg: PipelineConfig, coastline: Coastline | None = None,
                     cues: CueSet | None = None) -> Category:
    """Category from vessel count, anomalous ratio, duration and recurrence.

    ``event.anomalous_ratio`` is recomputed when ``traffic`` and ``cues`` are given.
    """
    if traffic is not None and cues is not None:
        event.anomalous_ratio, event.n_present = anomalous_ratio(event, cues, traffic, cfg)
    if event.distinct_mmsis > 1:
        if event.distinct_mmsis >= cfg.min_event_mmsis and event.anomalous_ratio >= cfg.th_group:
            return Category.SPOOFING if event.cue_kind is CueKind.KINEMATIC else Category.JAMMING
        return Category.NOISE
    if event.cue_kind is not CueKind.KINEMATIC:
        return Category.NOISE
    event.coastal = is_coastal(event.centroid, cfg, coastline)
    min_duration = cfg.t_single_coastal if event.coastal else cfg.t_single_offshore
    if event.duration < min_duration:
        return Category.NOISE
    if history.recurrence(event.mmsis[0]) >= cfg.persistence_day_fraction:
        return Category.PERSISTENT_SENSOR
    return Category.TRANSIENT_SENSOR


# --- stage driver -----------------------------------------------------------------


@dataclass
class KindCounts:
    points: int = 0
    mmsis: int = 0


@dataclass
class Stage3Report:
    """Per cue kind: input, unclustered noise, per-category and cluster counts."""

    input: dict[str, KindCounts] = field(default_factory=dict)
    unclustered: dict[str, KindCounts] = field(default_factory=dict)
    categories: dict[str, dict[str, KindCounts]] = field(default_factory=dict)
    clusters_total: dict[str, int] = field(default_factory=dict)
    final_clusters: dict[str, KindCounts] = field(default_factory=dict)


def _counts(mmsi: np.ndarray) -> KindCounts:
    return KindCounts(int(len(mmsi)), int(len(np.unique(mmsi))))


def _cluster_events(cues: CueSet, cfg: PipelineConfig, first_id: int) -> tuple[list[StEvent], np.ndarray]:
    labels = st_dbscan(cues, cfg.eps_s, cfg.eps_t, cfg.min_pts)
    events = []
    if len(labels):
        order = np.argsort(labels, kind="stable")
        sl = labels[order]
        for lab in range(int(labels.max()) + 1):
            a, b = np.searchsorted(sl, lab, "left"), np.searchsorted(sl, lab, "right")
            events.append(build_event(first_id + lab, cues, np.sort(order[a:b])))
    return events, labels


def check_category_gates(events: Sequence[StEvent], cfg: PipelineConfig) -> None:
    """Raise if any event violates the interference or single-vessel gates."""
    for e in events:
        if e.category in INTERFERENCE:
            if e.distinct_mmsis < cfg.min_event_mmsis or e.anomalous_ratio < cfg.th_group:
                raise RuntimeError(f"event {e.cluster_id} labeled {e.category.value} fails the coherence gates")
            expected = CueKind.KINEMATIC if e.category is Category.SPOOFING else CueKind.TX_GAP
            if e.cue_kind is not expected:
                raise RuntimeError(f"event {e.cluster_id}: {e.category.value} from {e.cue_kind.value} cues")
        if e.category in (Category.PERSISTENT_SENSOR, Category.TRANSIENT_SENSOR) and e.distinct_mmsis != 1:
            raise RuntimeError(f"event {e.cluster_id}: sensor artifact spans {e.distinct_mmsis} vessels")


def categorize_all(kin_cues: CueSet, gap_cues: CueSet, traffic: TrafficIndex, cfg: PipelineConfig,
                   history: MmsiHistory | None = None, coastline: Coastline | None = None,
                   ) -> tuple[list[StEvent], Stage3Report]:
    """Cluster each cue kind separately and categorize every cluster.

    Returns all clusters (including those categorized as noise) and the report.
    """
    history = history or MmsiHistory()
    history.qualifying_days = {}
    report = Stage3Report()
    events: list[StEvent] = []
    per_kind: list[tuple[CueSet, list[StEvent], np.ndarray]] = []
    next_id = 0
    for cues in (kin_cues, gap_cues):
        evs, labels = _cluster_events(cues, cfg, next_id)
        next_id += len(evs)
        per_kind.append((cues, evs, labels))
        for e in evs:
            e.anomalous_ratio, e.n_present = anomalous_ratio(e, cues, traffic, cfg)

    # qualifying single-vessel kinematic clusters feed the recurrence rule
    kin, kin_events, _ = per_kind[0]
    for e in kin_events:
        if e.distinct_mmsis == 1:
            e.coastal = is_coastal(e.centroid, cfg, coastline)
            need = cfg.t_single_coastal if e.coastal else cfg.t_single_offshore
            if e.duration >= need:
                history.qualifying_days.setdefault(e.mmsis[0], set()).update(e.days)

    for cues, evs, labels in per_kind:
        k = cues.kind.value
        for e in evs:
            e.category = classify_cluster(e, None, history, cfg, coastline)
        events.extend(evs)
        report.input[k] = _counts(cues.mmsi)
        report.unclustered[k] = _counts(cues.mmsi[labels < 0]) if len(labels) else KindCounts()
        cats = {}
        for cat in Category:
            members = [e.members for e in evs if e.category is cat]
            idx = np.concatenate(members) if members else np.zeros(0, dtype=np.int64)
            cats[cat.value] = _counts(cues.mmsi[idx])
        report.categories[k] = cats
        report.clusters_total[k] = len(evs)
        final = [e for e in evs if e.category in INTERFERENCE]
        report.final_clusters[k] = KindCounts(len(final), len({m for e in final for m in e.mmsis}))
    check_category_gates(events, cfg)
    return events, report


def cluster_baseline(kin_cues: CueSet, gap_cues: CueSet, cfg: PipelineConfig,
                     traffic: TrafficIndex | None = None) -> tuple[list[StEvent], Stage3Report]:
    """Naive comparator: every density cluster is reported as interference of
    the type its cues suggest, with no coherence, duration or recurrence test."""
    report = Stage3Report()
    events: list[StEvent] = []
    next_id = 0
    for cues in (kin_cues, gap_cues):
        evs, labels = _cluster_events(cues, cfg, next_id)
        next_id += len(evs)
        k = cues.kind.value
        for e in evs:
            if traffic is not None:
                e.anomalous_ratio, e.n_present = anomalous_ratio(e, cues, traffic, cfg)
            e.category = Category.SPOOFING if cues.kind is CueKind.KINEMATIC else Category.JAMMING
        events.extend(evs)
        report.input[k] = _counts(cues.mmsi)
        report.unclustered[k] = _counts(cues.mmsi[labels < 0]) if len(labels) else KindCounts()
        idx = np.concatenate([e.members for e in evs]) if evs else np.zeros(0, dtype=np.int64)
        report.categories[k] = {c.value: KindCounts() for c in Category}
        cat = Category.SPOOFING if cues.kind is CueKind.KINEMATIC else Category.JAMMING
        report.categories[k][cat.value] = _counts(cues.mmsi[idx])
        report.clusters_total[k] = len(evs)
        report.final_clusters[k] = KindCounts(len(evs), len({m for e in evs for m in e.mmsis}))
    return events, report
