"""End-to-end orchestration: preprocess, Stage 1, Stage 2, Stage 3.

Work inside a stage shards by MMSI through a ``mapper``; stage boundaries are
barriers and every merge is done in sorted MMSI order, so outputs do not
depend on the worker count.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
import os
import time
from concurrent.futures import ProcessPoolExecutor
from contextlib import contextmanager
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Iterator, Sequence

import numpy as np

from . import __version__
from .comm_integrity import run_stage1
from .config import PipelineConfig
from .imm import extract_kinematic_cues
from .ingest import ParseError, Records, Track, format_timestamp, partition_by_mmsi, preprocess, read_records
from .st_cluster import (
    INTERFERENCE,
    Category,
    Coastline,
    CueKind,
    CueSet,
    MmsiHistory,
    StEvent,
    TrafficIndex,
    categorize_all,
    cluster_baseline,
)
from .tx_interval import extract_gap_cues, tx_profile

log = logging.getLogger("aisgnss")

STAGE_TABLE_COLUMNS = ("stage", "process", "cue_kind", "points", "mmsis", "pct")


class PipelineError(RuntimeError):
    """Fatal configuration or I/O failure."""


@dataclass
class StageRow:
    stage: str
    process: str
    cue_kind: str
    points: int
    mmsis: int
    pct_of_initial: float


@dataclass
class StageReport:
    """Stage-reduction table. ``pct_of_initial`` is points over the initial
    count of the row's own kind: raw input messages for ``n/a`` rows, the
    Stage 2 cue count for cue rows, and all clusters of the kind for the
    final-cluster rows."""

    rows: list[StageRow] = field(default_factory=list)
    parse_errors: int = 0
    parsed_records: int = 0

    def add(self, stage, process, cue_kind, points, mmsis, base) -> None:
        pct = points / base if base else 0.0
        self.rows.append(StageRow(stage, process, cue_kind, int(points), int(mmsis), pct))

    def row(self, stage: str, process: str, cue_kind: str = "n/a") -> StageRow:
        for r in self.rows:
            if (r.stage, r.process, r.cue_kind) == (stage, process, cue_kind):
                return r
        raise KeyError((stage, process, cue_kind))

    def table(self) -> list[dict[str, Any]]:
        return [{"stage": r.stage, "process": r.process, "cue_kind": r.cue_kind, "points": r.points,
                 "mmsis": r.mmsis, "pct": f"{100.0 * r.pct_of_initial:.2f}"} for r in self.rows]


@dataclass
class RunManifest:
    config: dict[str, Any]
    inputs: list[dict[str, Any]]
    mode: str
    version: str = __version__
    stage_seconds: dict[str, float] = field(default_factory=dict)

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)


@dataclass
class PipelineResult:
    events: list[StEvent]
    report: StageReport
    manifest: RunManifest
    all_clusters: list[StEvent] = field(default_factory=list)
    cues: dict[str, CueSet] = field(default_factory=dict)
    errors: list[ParseError] = field(default_factory=list)

    @property
    def error_ratio(self) -> float:
        n = self.report.parsed_records + self.report.parse_errors
        return self.report.parse_errors / n if n else 0.0


@contextmanager
def _timer(store: dict[str, float], name: str) -> Iterator[None]:
    t0 = time.perf_counter()
    yield
    store[name] = round(time.perf_counter() - t0, 3)


@contextmanager
def worker_map(workers: int = 1):
    """Yield a ``map``-like callable; a process pool when ``workers > 1``."""
    if workers <= 1:
        yield map
        return
    with ProcessPoolExecutor(max_workers=workers) as ex:
        yield lambda fn, items: ex.map(fn, items, chunksize=64)


# --- stage 2 ----------------------------------------------------------------------------


def stage2_track(track: Track, cfg: PipelineConfig) -> tuple[np.ndarray, np.ndarray]:
    """Kinematic and gap cues of one track as rows [t, lat, lon, value]."""
    kin = extract_kinematic_cues(track, cfg)
    gaps = extract_gap_cues(track, tx_profile(track, cfg))
    k = np.array([[c.t, c.pos.lat, c.pos.lon, c.implied_speed] for c in kin], dtype=np.float64).reshape(-1, 4)
    g = np.array([[c.midpoint_t, c.pos.lat, c.pos.lon, c.T_k] for c in gaps], dtype=np.float64).reshape(-1, 4)
    return k, g


def _stage2_job(args):
    return stage2_track(*args)


def _cueset(kind: CueKind, mmsis: list[int], blocks: list[np.ndarray]) -> CueSet:
    if not blocks:
        return CueSet.empty(kind)
    rows = np.concatenate(blocks)
    mm = np.concatenate([np.full(len(b), m, dtype=np.int64) for m, b in zip(mmsis, blocks)])
    cs = CueSet(kind, mm, rows[:, 0].astype(np.int64), rows[:, 1], rows[:, 2], rows[:, 3])
    return cs.take(cs.canonical_order())


def run_stage2(records: Records, cfg: PipelineConfig, mapper=map) -> tuple[CueSet, CueSet]:
    tracks = list(partition_by_mmsi(records).values())
    out = list(mapper(_stage2_job, [(t, cfg) for t in tracks]))
    mmsis = [t.mmsi for t in tracks]
    return (_cueset(CueKind.KINEMATIC, mmsis, [o[0] for o in out]),
            _cueset(CueKind.TX_GAP, mmsis, [o[1] for o in out]))


# --- orchestration ------------------------------------------------------------------------


def _digest(path: Path) -> dict[str, Any]:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return {"path": str(path), "sha256": h.hexdigest(), "bytes": path.stat().st_size}


def load_inputs(paths: Sequence[str | Path], cfg: PipelineConfig) -> tuple[Records, list[ParseError]]:
    parts, errors = [], []
    for p in paths:
        try:
            recs, errs = read_records(p, sog_unit=cfg.sog_unit)
        except OSError as e:
            raise PipelineError(f"cannot read {p}: {e}") from e
        parts.append(recs)
        errors.extend(errs)
    return (parts[0] if len(parts) == 1 else Records.concat(parts)), errors


def run_records(records: Records, cfg: PipelineConfig, mode: str = "full", workers: int = 1,
                coastline: Coastline | None = None) -> PipelineResult:
    """Run every stage on in-memory records."""
    if mode not in ("full", "baseline"):
        raise PipelineError(f"unknown mode {mode!r}")
    timing: dict[str, float] = {}
    rep = StageReport(parsed_records=len(records))
    if coastline is None and cfg.coastline:
        try:
            coastline = Coastline.load(cfg.coastline)
        except (OSError, ValueError) as e:
            raise PipelineError(f"cannot load coastline {cfg.coastline}: {e}") from e

    with worker_map(workers) as mapper:
        with _timer(timing, "preprocess"):
            pre, prep = preprocess(records, cfg)
        del records  # the caller may have handed over its only reference
        base = prep.input_points
        rep.add("preprocess", "input", "n/a", prep.input_points, prep.input_mmsis, base)
        rep.add("preprocess", "exact duplicates removed", "n/a", prep.exact_duplicates, 0, base)
        rep.add("preprocess", "position scatter removed", "n/a", prep.scatter_removed, prep.scatter_mmsis, base)
        rep.add("preprocess", "outside bounding box removed", "n/a", prep.outside_bbox,
                prep.outside_bbox_mmsis, base)
        rep.add("preprocess", "retained", "n/a", prep.output_points, prep.output_mmsis, base)

        if mode == "full":
            with _timer(timing, "stage1"):
                clean, s1 = run_stage1(pre, cfg, mapper)
            rep.add("stage1", "stale retransmission removed", "n/a", s1.stale_points, s1.stale_mmsis, base)
            rep.add("stage1", "MMSI duplication removed", "n/a", s1.duplication_points, s1.duplication_mmsis, base)
            rep.add("stage1", "retained", "n/a", len(clean), clean.n_mmsis(), base)
        else:
            clean = pre
        del pre

        with _timer(timing, "stage2"):
            kin, gap = run_stage2(clean, cfg, mapper)
        for cs, name in ((kin, "kinematic cues"), (gap, "transmission-gap cues")):
            rep.add("stage2", name, cs.kind.value, len(cs), len(np.unique(cs.mmsi)), len(cs))

    with _timer(timing, "stage3"):
        traffic = TrafficIndex(clean)
        if mode == "full":
            clusters, s3 = categorize_all(kin, gap, traffic, cfg, MmsiHistory.from_records(clean), coastline)
        else:
            clusters, s3 = cluster_baseline(kin, gap, cfg, traffic)
    for cs in (kin, gap):
        k = cs.kind.value
        n = len(cs)
        u = s3.unclustered[k]
        rep.add("stage3", "unclustered noise", k, u.points, u.mmsis, n)
        cats = s3.categories[k]
        final_cat = Category.SPOOFING if cs.kind is CueKind.KINEMATIC else Category.JAMMING
        for cat, label in ((Category.PERSISTENT_SENSOR, "persistent sensor"),
                           (Category.TRANSIENT_SENSOR, "transient sensor"),
                           (Category.NOISE, "rejected clusters"),
                           (final_cat, final_cat.value)):
            c = cats[cat.value]
            rep.add("stage3", label, k, c.points, c.mmsis, n)
        f = s3.final_clusters[k]
        rep.add("stage3", "final clusters", k, f.points, f.mmsis, s3.clusters_total[k])

    events = sorted((e for e in clusters if e.category is not Category.NOISE), key=lambda e: e.cluster_id)
    manifest = RunManifest(cfg.to_dict(), [], mode, stage_seconds=timing)
    return PipelineResult(events, rep, manifest, clusters, {"kinematic": kin, "tx_gap": gap})


def run_pipeline(paths: Sequence[str | Path], cfg: PipelineConfig, mode: str = "full",
                 workers: int = 1, out_dir: str | Path | None = None) -> PipelineResult:
    """Read inputs, run every stage and (optionally) write outputs atomically."""
    t0 = time.perf_counter()
    paths = [Path(p) for p in paths]
    for p in paths:
        if not p.is_file():
            raise PipelineError(f"input not found: {p}")
    loaded = list(load_inputs(paths, cfg))
    errors = loaded.pop()
    read_s = round(time.perf_counter() - t0, 3)
    res = run_records(loaded.pop(), cfg, mode, workers)
    res.errors = errors
    res.report.parse_errors = len(errors)
    res.manifest.inputs = [_digest(p) for p in paths]
    res.manifest.stage_seconds = {"read": read_s, **res.manifest.stage_seconds}
    if out_dir is not None:
        write_outputs(res, out_dir)
    return res


# --- emitters ----------------------------------------------------------------------------


def _atomic_write(path: Path, text: str) -> None:
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)
    os.replace(tmp, path)


def emit_stage_table(report: StageReport, format: str = "csv") -> str:
    rows = report.table()
    if format == "csv":
        buf = io.StringIO()
        w = csv.DictWriter(buf, fieldnames=STAGE_TABLE_COLUMNS, lineterminator="\n")
        w.writeheader()
        w.writerows(rows)
        return buf.getvalue()
    if format == "json":
        return json.dumps({"columns": list(STAGE_TABLE_COLUMNS), "rows": rows,
                           "parse_errors": report.parse_errors}, indent=2) + "\n"
    raise ValueError(f"unknown format {format!r}")


def event_feature(e: StEvent) -> dict[str, Any]:
    return {
        "type": "Feature",
        "geometry": {"type": "Point", "coordinates": [e.centroid.lon, e.centroid.lat]},
        "properties": {
            "cluster_id": e.cluster_id,
            "category": e.category.value,
            "cue_kind": e.cue_kind.value,
            "mmsi_count": e.distinct_mmsis,
            "mmsis": list(e.mmsis),
            "t_start": format_timestamp(e.t_start),
            "t_end": format_timestamp(e.t_end),
            "radius_m": round(e.radius_m, 3),
            "anomalous_ratio": round(e.anomalous_ratio, 6),
            "member_count": int(len(e.members)),
        },
    }


def emit_events_geojson(events: Sequence[StEvent]) -> str:
    fc = {"type": "FeatureCollection", "features": [event_feature(e) for e in events]}
    return json.dumps(fc, indent=1) + "\n"


def emit_members_geojson(events: Sequence[StEvent], cues: dict[str, CueSet]) -> str:
    """Member cues of each event as one MultiPoint feature per event."""
    feats = []
    for e in events:
        cs = cues[e.cue_kind.value]
        coords = [[float(cs.lon[i]), float(cs.lat[i])] for i in e.members]
        feats.append({"type": "Feature", "geometry": {"type": "MultiPoint", "coordinates": coords},
                      "properties": {"cluster_id": e.cluster_id, "category": e.category.value}})
    return json.dumps({"type": "FeatureCollection", "features": feats}, indent=1) + "\n"


def write_outputs(res: PipelineResult, out_dir: str | Path) -> dict[str, Path]:
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise PipelineError(f"cannot create {out}: {e}") from e
    paths = {
        "events": out / "events.geojson",
        "members": out / "event_members.geojson",
        "stage_csv": out / "stage_table.csv",
        "stage_json": out / "stage_table.json",
        "manifest": out / "manifest.json",
    }
    _atomic_write(paths["events"], emit_events_geojson(res.events))
    _atomic_write(paths["members"], emit_members_geojson(res.events, res.cues))
    _atomic_write(paths["stage_csv"], emit_stage_table(res.report, "csv"))
    _atomic_write(paths["stage_json"], emit_stage_table(res.report, "json"))
    _atomic_write(paths["manifest"], json.dumps(res.manifest.to_dict(), indent=2) + "\n")
    return paths


def read_events_geojson(path: str | Path):
    """EventSummary objects from an emitted events file (for evaluation)."""
    from .geo import GeoPos
    from .ingest import parse_timestamp
    from .synth import EventSummary

    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    out = []
    for f in doc["features"]:
        p = f["properties"]
        lon, lat = f["geometry"]["coordinates"]
        out.append(EventSummary(p["category"], GeoPos(lat, lon), parse_timestamp(p["t_start"]),
                                parse_timestamp(p["t_end"]), tuple(p.get("mmsis", ()))))
    return out


def interference_events(events: Sequence[StEvent]) -> list[StEvent]:
    return [e for e in events if e.category in INTERFERENCE]
