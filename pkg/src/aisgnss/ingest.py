"""Decoded AIS dynamic reports: parsing, canonical ordering and preprocessing.

Records are held column-wise (:class:`Records`) so that tens of millions of
reports fit in memory; :class:`AisRecord` is the row view used at API edges.
Timestamps are integer epoch milliseconds throughout.
"""

from __future__ import annotations

import csv
import io
import json
import math
from array import array
from dataclasses import dataclass
from datetime import datetime, timedelta, timezone
from pathlib import Path
from typing import IO, Iterable, Iterator

import numpy as np

from .config import BoundingBox, PipelineConfig
from .geo import haversine_array

KNOTS_TO_MPS = 0.514444
FIELDS = ("mmsi", "t", "lat", "lon", "sog", "cog")
_EPOCH = datetime(1970, 1, 1, tzinfo=timezone.utc)
_MS = timedelta(milliseconds=1)


class IngestError(IOError):
    """The source cannot be read at all (fatal)."""


@dataclass(frozen=True)
class ParseError:
    line: int
    reason: str


@dataclass(frozen=True, slots=True)
class AisRecord:
    mmsi: int
    t: int
    lat: float
    lon: float
    sog: float
    cog: float
    heading: float | None = None

    def __post_init__(self):
        reason = _validate(self.mmsi, self.lat, self.lon, self.sog, self.cog, self.heading)
        if reason:
            raise ValueError(reason)


def _validate(mmsi, lat, lon, sog, cog, heading):
    if not 0 <= mmsi <= 999_999_999:
        return "mmsi not a 9-digit identifier"
    for name, v in (("lat", lat), ("lon", lon), ("sog", sog), ("cog", cog)):
        if not math.isfinite(v):
            return f"{name} not finite"
    if not -90.0 <= lat <= 90.0:
        return "lat out of range"
    if not -180.0 <= lon <= 180.0:
        return "lon out of range"
    if sog < 0.0:
        return "sog negative"
    if not 0.0 <= cog < 360.0:
        return "cog out of range"
    if heading is not None and not (math.isfinite(heading) and 0.0 <= heading < 360.0):
        return "heading out of range"
    return None


class Records:
    """Column store of AIS reports. Missing headings are NaN."""

    __slots__ = ("mmsi", "t", "lat", "lon", "sog", "cog", "heading")

    def __init__(self, mmsi, t, lat, lon, sog, cog, heading=None):
        self.mmsi = np.asarray(mmsi, dtype=np.int64)
        self.t = np.asarray(t, dtype=np.int64)
        self.lat = np.asarray(lat, dtype=np.float64)
        self.lon = np.asarray(lon, dtype=np.float64)
        self.sog = np.asarray(sog, dtype=np.float64)
        self.cog = np.asarray(cog, dtype=np.float64)
        if heading is None:
            heading = np.full(len(self.mmsi), np.nan)
        self.heading = np.asarray(heading, dtype=np.float64)
        n = len(self.mmsi)
        if any(len(getattr(self, f)) != n for f in self.__slots__):
            raise ValueError("column length mismatch")

    @classmethod
    def empty(cls) -> "Records":
        return cls([], [], [], [], [], [], [])

    @classmethod
    def from_records(cls, recs: Iterable[AisRecord]) -> "Records":
        recs = list(recs)
        return cls(
            [r.mmsi for r in recs],
            [r.t for r in recs],
            [r.lat for r in recs],
            [r.lon for r in recs],
            [r.sog for r in recs],
            [r.cog for r in recs],
            [np.nan if r.heading is None else r.heading for r in recs],
        )

    @classmethod
    def concat(cls, parts: Iterable["Records"]) -> "Records":
        parts = list(parts)
        if not parts:
            return cls.empty()
        return cls(*(np.concatenate([getattr(p, f) for p in parts]) for f in cls.__slots__))

    def __len__(self) -> int:
        return len(self.mmsi)

    def __getitem__(self, i: int) -> AisRecord:
        h = self.heading[i]
        return AisRecord(
            int(self.mmsi[i]), int(self.t[i]), float(self.lat[i]), float(self.lon[i]),
            float(self.sog[i]), float(self.cog[i]), None if np.isnan(h) else float(h),
        )

    def __iter__(self) -> Iterator[AisRecord]:
        for i in range(len(self)):
            yield self[i]

    def __eq__(self, other) -> bool:
        if not isinstance(other, Records) or len(self) != len(other):
            return False
        return all(
            np.array_equal(getattr(self, f), getattr(other, f), equal_nan=f == "heading")
            for f in self.__slots__
        )

    def __repr__(self) -> str:
        return f"Records(n={len(self)}, mmsis={len(np.unique(self.mmsi))})"

    def take(self, idx) -> "Records":
        """Row subset. An all-true mask returns ``self`` without copying."""
        if isinstance(idx, np.ndarray) and idx.dtype == np.bool_ and len(idx) == len(self) and idx.all():
            return self
        return Records(*(getattr(self, f)[idx] for f in self.__slots__))

    def copy(self) -> "Records":
        return Records(*(getattr(self, f).copy() for f in self.__slots__))

    def canonical_order(self) -> np.ndarray:
        """Indices sorting by (t, mmsi, lat, lon, sog, cog); stable for full ties."""
        return np.lexsort((self.cog, self.sog, self.lon, self.lat, self.mmsi, self.t))

    def sorted(self) -> "Records":
        """Canonically ordered records; ``self`` when already in order."""
        order = self.canonical_order()
        if len(order) and np.all(order[1:] > order[:-1]):
            return self
        return self.take(order)

    def n_mmsis(self) -> int:
        return int(len(np.unique(self.mmsi)))


@dataclass(frozen=True)
class Track:
    mmsi: int
    records: Records

    def __len__(self) -> int:
        return len(self.records)


# --- parsing -------------------------------------------------------------


def parse_timestamp(value) -> int:
    """ISO-8601 (timezone required) or integer epoch-ms to epoch milliseconds."""
    if isinstance(value, bool):
        raise ValueError("t has invalid type")
    if isinstance(value, int):
        return value
    if isinstance(value, float):
        if value.is_integer():
            return int(value)
        raise ValueError("t epoch-ms must be an integer")
    if not isinstance(value, str):
        raise ValueError("t has invalid type")
    s = value.strip()
    if s.lstrip("-").isdigit():
        return int(s)
    if s.endswith(("Z", "z")):
        s = s[:-1] + "+00:00"
    try:
        dt = datetime.fromisoformat(s)
    except ValueError:
        raise ValueError("t is not ISO-8601") from None
    if dt.tzinfo is None:
        raise ValueError("t lacks a timezone")
    if dt.microsecond % 1000:
        raise ValueError("t has sub-millisecond precision")
    return (dt - _EPOCH) // _MS


def format_timestamp(t_ms: int) -> str:
    dt = _EPOCH + timedelta(milliseconds=int(t_ms))
    return dt.strftime("%Y-%m-%dT%H:%M:%S.") + f"{dt.microsecond // 1000:03d}Z"


def _number(obj, name):
    v = obj.get(name)
    if v is None or v == "":
        raise ValueError(f"missing field {name}")
    if isinstance(v, bool):
        raise ValueError(f"{name} not a number")
    if isinstance(v, str):
        try:
            v = float(v)
        except ValueError:
            raise ValueError(f"{name} not a number") from None
    if not isinstance(v, (int, float)):
        raise ValueError(f"{name} not a number")
    return float(v)


def _mmsi(v):
    if v is None or v == "":
        raise ValueError("missing field mmsi")
    if isinstance(v, bool):
        raise ValueError("mmsi not an integer")
    if isinstance(v, str):
        if not v.strip().isdigit():
            raise ValueError("mmsi not an integer")
        v = int(v)
    if isinstance(v, float) and v.is_integer():
        v = int(v)
    if not isinstance(v, int):
        raise ValueError("mmsi not an integer")
    return v


class _Columns:
    def __init__(self):
        self.mmsi = array("q")
        self.t = array("q")
        self.lat = array("d")
        self.lon = array("d")
        self.sog = array("d")
        self.cog = array("d")
        self.heading = array("d")

    def add(self, obj: dict, sog_scale: float) -> None:
        mmsi = _mmsi(obj.get("mmsi"))
        if obj.get("t") in (None, ""):
            raise ValueError("missing field t")
        t = parse_timestamp(obj["t"])
        lat = _number(obj, "lat")
        lon = _number(obj, "lon")
        sog = _number(obj, "sog") * sog_scale
        cog = _number(obj, "cog")
        heading = None if obj.get("heading") in (None, "") else _number(obj, "heading")
        reason = _validate(mmsi, lat, lon, sog, cog, heading)
        if reason:
            raise ValueError(reason)
        self.mmsi.append(mmsi)
        self.t.append(t)
        self.lat.append(lat)
        self.lon.append(lon)
        self.sog.append(sog)
        self.cog.append(cog)
        self.heading.append(math.nan if heading is None else heading)

    def records(self) -> Records:
        return Records(*(np.frombuffer(getattr(self, f), dtype=np.int64 if f in ("mmsi", "t") else np.float64)
                         if len(getattr(self, f)) else [] for f in Records.__slots__))


def _text_stream(source) -> IO[str]:
    if isinstance(source, (bytes, bytearray)):
        source = io.BytesIO(source)
    if isinstance(source, io.TextIOBase):
        return source
    return io.TextIOWrapper(source, encoding="utf-8", newline="")


def parse_records(source, format: str = "ndjson", sog_unit: str = "mps") -> tuple[Records, list[ParseError]]:
    """Parse a UTF-8 byte stream of NDJSON or CSV reports.

    Malformed lines are returned as :class:`ParseError` (1-based line numbers)
    rather than dropped silently. Output keeps source order.
    """
    if format not in ("ndjson", "csv"):
        raise ValueError(f"unknown format {format!r}")
    if sog_unit not in ("mps", "knots"):
        raise ValueError(f"unknown sog unit {sog_unit!r}")
    scale = KNOTS_TO_MPS if sog_unit == "knots" else 1.0
    cols = _Columns()
    errors: list[ParseError] = []
    stream = _text_stream(source)
    try:
        if format == "ndjson":
            for lineno, line in enumerate(stream, 1):
                if not line.strip():
                    continue
                try:
                    obj = json.loads(line)
                    if not isinstance(obj, dict):
                        raise ValueError("line is not a JSON object")
                    cols.add(obj, scale)
                except ValueError as exc:
                    errors.append(ParseError(lineno, str(exc)))
        else:
            reader = csv.DictReader(stream)
            missing = [f for f in FIELDS if f not in (reader.fieldnames or ())]
            if missing:
                raise IngestError(f"CSV header lacks columns: {', '.join(missing)}")
            for row in reader:
                try:
                    if None in row:
                        raise ValueError("row has more cells than the header")
                    cols.add(row, scale)
                except ValueError as exc:
                    errors.append(ParseError(reader.line_num, str(exc)))
    except UnicodeDecodeError as exc:
        raise IngestError(f"source is not UTF-8: {exc}") from None
    except csv.Error as exc:
        raise IngestError(f"malformed CSV: {exc}") from None
    finally:
        if isinstance(stream, io.TextIOWrapper):
            stream.detach()
    return cols.records(), errors


def detect_format(path: str | Path) -> str:
    return "csv" if str(path).lower().endswith(".csv") else "ndjson"


def read_records(path: str | Path, format: str | None = None, sog_unit: str = "mps"):
    try:
        fh = open(path, "rb")
    except OSError as exc:
        raise IngestError(f"cannot open {path}: {exc}") from None
    with fh:
        return parse_records(fh, format or detect_format(path), sog_unit)


def record_to_json(r: AisRecord) -> str:
    obj = {"mmsi": r.mmsi, "t": format_timestamp(r.t), "lat": r.lat, "lon": r.lon, "sog": r.sog, "cog": r.cog}
    if r.heading is not None:
        obj["heading"] = r.heading
    return json.dumps(obj, separators=(",", ":"))


def write_ndjson(records: Records, fh: IO[str]) -> None:
    """Canonical NDJSON form (m/s, ISO timestamps, shortest round-trip floats)."""
    mm, tt = records.mmsi.tolist(), records.t.tolist()
    la, lo, sg, cg, hd = (getattr(records, f).tolist() for f in ("lat", "lon", "sog", "cog", "heading"))
    for i in range(len(mm)):
        h = hd[i]
        head = "" if h != h else f',"heading":{h!r}'
        fh.write(
            f'{{"mmsi":{mm[i]},"t":"{format_timestamp(tt[i])}","lat":{la[i]!r},"lon":{lo[i]!r},'
            f'"sog":{sg[i]!r},"cog":{cg[i]!r}{head}}}\n'
        )


# --- preprocessing -------------------------------------------------------


def dedup_exact(records: Records) -> tuple[Records, int]:
    """Collapse identical (mmsi, t, lat, lon, sog, cog) tuples; output canonically sorted."""
    s = records.sorted()
    n = len(s)
    if n == 0:
        return s, 0
    same = np.ones(n - 1, dtype=bool)
    for f in FIELDS:
        col = getattr(s, f)
        same &= col[1:] == col[:-1]
    keep = np.concatenate(([True], ~same))
    return s.take(keep), int(n - keep.sum())


def _same_key_groups(s: Records) -> np.ndarray:
    """Start indices of runs sharing (t, mmsi) in a canonically sorted store."""
    n = len(s)
    if n == 0:
        return np.zeros(0, dtype=np.int64)
    brk = (s.t[1:] != s.t[:-1]) | (s.mmsi[1:] != s.mmsi[:-1])
    return np.concatenate(([0], np.nonzero(brk)[0] + 1))


def filter_position_scatter(records: Records, d_scatter: float) -> tuple[Records, int]:
    """Drop same-(mmsi, t) groups whose positions disagree by more than ``d_scatter``
    meters; collapse agreeing groups to their first record."""
    s = records.sorted()
    n = len(s)
    starts = _same_key_groups(s)
    ends = np.append(starts[1:], n)
    keep = np.zeros(n, dtype=bool)
    keep[starts[ends - starts == 1]] = True
    for a, b in zip(starts[ends - starts > 1], ends[ends - starts > 1]):
        lat, lon = s.lat[a:b], s.lon[a:b]
        d = haversine_array(lat[:, None], lon[:, None], lat[None, :], lon[None, :])
        if d.max() <= d_scatter:
            keep[a] = True
    return s.take(keep), int(n - keep.sum())


def filter_bbox(records: Records, bbox: BoundingBox) -> tuple[Records, int]:
    m = (
        (records.lat >= bbox.lat_min) & (records.lat <= bbox.lat_max)
        & (records.lon >= bbox.lon_min) & (records.lon <= bbox.lon_max)
    )
    return records.take(m), int(len(records) - m.sum())


def mmsi_order(records: Records) -> np.ndarray:
    """Indices grouping records by MMSI (ascending), each group in canonical order."""
    r = records
    return np.lexsort((r.cog, r.sog, r.lon, r.lat, r.t, r.mmsi))


def partition_by_mmsi(records: Records, order: np.ndarray | None = None) -> dict[int, Track]:
    """Split into per-MMSI tracks sorted by (t, lat, lon, sog, cog); keys ascending.

    Tracks are contiguous slices of one reordered copy, taken by ``order``
    (default :func:`mmsi_order`).
    """
    if len(records) == 0:
        return {}
    s = records.take(mmsi_order(records) if order is None else order)
    brk = np.nonzero(s.mmsi[1:] != s.mmsi[:-1])[0] + 1
    starts = np.concatenate(([0], brk))
    ends = np.append(brk, len(s))
    return {int(s.mmsi[a]): Track(int(s.mmsi[a]), s.take(slice(a, b))) for a, b in zip(starts, ends)}


@dataclass
class PreprocessReport:
    input_points: int = 0
    input_mmsis: int = 0
    exact_duplicates: int = 0
    scatter_removed: int = 0
    scatter_mmsis: int = 0
    outside_bbox: int = 0
    outside_bbox_mmsis: int = 0
    output_points: int = 0
    output_mmsis: int = 0


def preprocess(records: Records, cfg: PipelineConfig) -> tuple[Records, PreprocessReport]:
    """Exact dedup, then position-scatter filter, then bounding box."""
    rep = PreprocessReport(input_points=len(records), input_mmsis=records.n_mmsis())
    r, rep.exact_duplicates = dedup_exact(records)
    before = r
    r, rep.scatter_removed = filter_position_scatter(r, cfg.d_scatter)
    rep.scatter_mmsis = _mmsis_lost(before, r)
    before = r
    r, rep.outside_bbox = filter_bbox(r, cfg.bbox)
    rep.outside_bbox_mmsis = _mmsis_lost(before, r)
    rep.output_points, rep.output_mmsis = len(r), r.n_mmsis()
    return r, rep


def _mmsis_lost(before: Records, after: Records) -> int:
    """Distinct MMSIs that had at least one record removed."""
    if len(before) == len(after):
        return 0
    b = np.unique(before.mmsi, return_counts=True)
    a = dict(zip(*np.unique(after.mmsi, return_counts=True)))
    return int(sum(1 for m, c in zip(*b) if a.get(m, 0) < c))
