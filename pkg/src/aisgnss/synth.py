"""Synthetic AIS scenarios with ground truth, and a detection evaluator.

Vessels follow piecewise constant-velocity / constant-turn routes around a
home point and report at a fixed interval with a per-vessel phase. Each
injection spawns its own actor vessels at scenario generation time and then
mutates records with an RNG derived from (seed, injection id), so injections
that do not overlap commute.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np

from .config import BoundingBox
from .geo import EARTH_RADIUS_M, GeoPos, haversine_array, wrap_pi
from .ingest import Records, format_timestamp, parse_timestamp, write_ndjson

DAY_S = 86_400.0
DEFAULT_START = parse_timestamp("2024-11-01T00:00:00.000Z")
TURN_RATE = 0.01
BACKGROUND_MMSI = 440_000_001
ACTOR_MMSI = 441_000_001


class InjectionKind(str, Enum):
    SPOOFING = "spoofing"
    JAMMING = "jamming"
    MMSI_DUPLICATION = "mmsi_duplication"
    STALE_RETRANSMISSION = "stale_retransmission"
    PERSISTENT_SENSOR = "persistent_sensor"
    TRANSIENT_SENSOR = "transient_sensor"


SENSOR_KINDS = (InjectionKind.PERSISTENT_SENSOR, InjectionKind.TRANSIENT_SENSOR)

_DEFAULT_ACTORS = {
    InjectionKind.SPOOFING: 11,
    InjectionKind.JAMMING: 11,
    InjectionKind.MMSI_DUPLICATION: 2,
    InjectionKind.STALE_RETRANSMISSION: 1,
    InjectionKind.PERSISTENT_SENSOR: 1,
    InjectionKind.TRANSIENT_SENSOR: 1,
}

_DEFAULT_PARAMS: dict[InjectionKind, dict[str, Any]] = {
    InjectionKind.SPOOFING: {"displacement": [3000.0, 1500.0], "spawn_radius": None},
    InjectionKind.JAMMING: {"on": 200.0, "off": 420.0, "spawn_radius": None},
    InjectionKind.MMSI_DUPLICATION: {"separation": 100_000.0},
    InjectionKind.STALE_RETRANSMISSION: {"delay": 57.020, "count": 6},
    InjectionKind.PERSISTENT_SENSOR: {"offset": [3000.0, 2000.0], "p_excursion": 0.5, "days": [0],
                                      "home_radius": 4000.0},
    InjectionKind.TRANSIENT_SENSOR: {"offset": [3000.0, 2000.0], "p_excursion": 0.5, "days": [0],
                                     "home_radius": 4000.0},
}


@dataclass
class Injection:
    kind: InjectionKind
    center: GeoPos
    radius: float
    window: tuple[float, float]
    params: dict[str, Any] = field(default_factory=dict)
    n_vessels: int | None = None
    id: int | None = None

    def __post_init__(self):
        self.kind = InjectionKind(self.kind)
        if isinstance(self.center, dict):
            self.center = GeoPos(**self.center)
        elif not isinstance(self.center, GeoPos):
            self.center = GeoPos(*self.center)
        self.window = (float(self.window[0]), float(self.window[1]))
        merged = dict(_DEFAULT_PARAMS[self.kind])
        unknown = set(self.params) - set(merged)
        if unknown:
            raise ValueError(f"unknown params for {self.kind.value}: {sorted(unknown)}")
        merged.update(self.params)
        self.params = merged
        if self.n_vessels is None:
            self.n_vessels = _DEFAULT_ACTORS[self.kind]
        if self.window[1] < self.window[0] or self.radius <= 0:
            raise ValueError("injection needs window[0] <= window[1] and a positive radius")

    def windows(self) -> list[tuple[float, float]]:
        """Active windows in seconds from scenario start (sensor kinds recur per day)."""
        if self.kind in SENSOR_KINDS:
            return [(self.window[0] + d * DAY_S, self.window[1] + d * DAY_S) for d in self.params["days"]]
        return [self.window]

    def to_dict(self) -> dict[str, Any]:
        return {"kind": self.kind.value, "center": {"lat": self.center.lat, "lon": self.center.lon},
                "radius": self.radius, "window": list(self.window), "params": self.params,
                "n_vessels": self.n_vessels, "id": self.id}


@dataclass
class Scenario:
    seed: int = 0
    region: BoundingBox = field(default_factory=BoundingBox)
    duration: float = 3600.0
    n_vessels: int = 20
    report_interval: float = 10.0
    injections: list[Injection] = field(default_factory=list)
    start: int = DEFAULT_START
    session_length: float | None = None
    position_noise: float = 5.0
    home_radius: float = 30_000.0
    margin: float = 100_000.0

    def __post_init__(self):
        if isinstance(self.region, dict):
            self.region = BoundingBox(**self.region)
        self.injections = [i if isinstance(i, Injection) else Injection(**i) for i in self.injections]
        for k, inj in enumerate(self.injections):
            if inj.id is None:
                inj.id = k
            for a, b in inj.windows():
                if a < 0 or b > self.duration:
                    raise ValueError(f"injection {inj.id} window [{a}, {b}] outside the scenario")
        if isinstance(self.start, str):
            self.start = parse_timestamp(self.start)
        if self.session_length is not None and not 0 < self.session_length <= DAY_S:
            raise ValueError("session_length must be in (0, 86400]")
        if self.report_interval <= 0 or self.duration < 0 or self.n_vessels < 0:
            raise ValueError("invalid scenario timing or size")

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "Scenario":
        return cls(**d)

    @classmethod
    def load(cls, path: str | Path) -> "Scenario":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))

    def to_dict(self) -> dict[str, Any]:
        r = self.region
        return {"seed": self.seed, "region": {"lat_min": r.lat_min, "lat_max": r.lat_max,
                                               "lon_min": r.lon_min, "lon_max": r.lon_max},
                "duration": self.duration, "n_vessels": self.n_vessels,
                "report_interval": self.report_interval, "start": format_timestamp(self.start),
                "session_length": self.session_length, "position_noise": self.position_noise,
                "home_radius": self.home_radius, "margin": self.margin,
                "injections": [i.to_dict() for i in self.injections]}


@dataclass
class TruthEvent:
    kind: InjectionKind
    injection_id: int
    mmsis: tuple[int, ...]
    t_start: int
    t_end: int
    center: GeoPos
    radius: float
    n_records: int


@dataclass
class GroundTruth:
    seed: int
    start: int
    labels: dict[tuple[int, int], str] = field(default_factory=dict)
    deleted: list[tuple[int, int, str]] = field(default_factory=list)
    events: list[TruthEvent] = field(default_factory=list)
    actors: dict[int, list[int]] = field(default_factory=dict)

    def label_counts(self) -> dict[str, int]:
        out: dict[str, int] = {}
        for v in self.labels.values():
            out[v] = out.get(v, 0) + 1
        return out

    def label_of(self, mmsi: int, t: int) -> str:
        return self.labels.get((mmsi, t), "normal")

    def copy(self) -> "GroundTruth":
        return GroundTruth(self.seed, self.start, dict(self.labels), list(self.deleted),
                           list(self.events), {k: list(v) for k, v in self.actors.items()})


# --- motion ----------------------------------------------------------------------


def _advance(x, y, psi, v, w, dt):
    if w == 0.0:
        return x + v * math.cos(psi) * dt, y + v * math.sin(psi) * dt, psi
    p1 = psi + w * dt
    return (x + v / w * (math.sin(p1) - math.sin(psi)),
            y + v / w * (math.cos(psi) - math.cos(p1)), wrap_pi(p1))


def _plan_route(rng, v, home_radius, horizon, x0, y0, psi0):
    """Segments (tau_start, x, y, psi, omega) covering [0, horizon]."""
    segs = []
    tau, x, y, psi = 0.0, x0, y0, psi0
    while tau <= horizon:
        dpsi = wrap_pi(math.atan2(-y, -x) - psi)
        if math.hypot(x, y) > home_radius and abs(dpsi) > math.pi / 3:
            w = math.copysign(TURN_RATE, dpsi)
            dur = abs(dpsi) / TURN_RATE
        elif rng.random() < 0.6:
            w, dur = 0.0, rng.uniform(600.0, 2400.0)
        else:
            w, dur = rng.uniform(-0.003, 0.003), rng.uniform(300.0, 900.0)
        segs.append((tau, x, y, psi, w))
        x, y, psi = _advance(x, y, psi, v, w, dur)
        tau += dur
    return np.array(segs)


def _eval_route(segs, v, tau):
    k = np.searchsorted(segs[:, 0], tau, side="right") - 1
    t0, x0, y0, p0, w = (segs[k, i] for i in range(5))
    dt = tau - t0
    straight = w == 0.0
    ws = np.where(straight, 1.0, w)
    p1 = p0 + w * dt
    x = np.where(straight, x0 + v * np.cos(p0) * dt, x0 + v / ws * (np.sin(p1) - np.sin(p0)))
    y = np.where(straight, y0 + v * np.sin(p0) * dt, y0 + v / ws * (np.cos(p0) - np.cos(p1)))
    return x, y, p1


def _unproject(lat0, lon0, x, y):
    lat = lat0 + np.degrees(y / EARTH_RADIUS_M)
    lon = lon0 + np.degrees(x / (EARTH_RADIUS_M * math.cos(math.radians(lat0))))
    return lat, lon


def _offset(pos: GeoPos, east: float, north: float) -> GeoPos:
    lat, lon = _unproject(pos.lat, pos.lon, np.array(east), np.array(north))
    return GeoPos(float(lat), float(lon))


@dataclass
class _Vessel:
    mmsi: int
    anchor: GeoPos  # frame origin for the route
    speed: float
    phase_ms: int
    session_start: float  # seconds into the UTC-free scenario day
    home_radius: float
    psi0: float
    x0: float = 0.0
    y0: float = 0.0
    shift: tuple[float, float] = (0.0, 0.0)  # applied after route evaluation


def _report_times(sc: Scenario, v: _Vessel) -> tuple[np.ndarray, np.ndarray]:
    """(offset_ms from scenario start, active seconds) for every report."""
    iv = int(round(sc.report_interval * 1000))
    n = int(math.floor(sc.duration / sc.report_interval)) + 1
    off = v.phase_ms + iv * np.arange(n, dtype=np.int64)
    if sc.session_length is None:
        return off, off / 1000.0
    L = sc.session_length
    sec = off / 1000.0
    day = np.floor(sec / DAY_S)
    tod = sec - day * DAY_S
    m = (tod >= v.session_start) & (tod <= v.session_start + L)
    return off[m], day[m] * L + (tod[m] - v.session_start)


def _vessel_records(sc: Scenario, v: _Vessel, rng) -> Records:
    off, tau = _report_times(sc, v)
    if len(off) == 0:
        return Records.empty()
    segs = _plan_route(rng, v.speed, v.home_radius, float(tau.max()) + 1.0, v.x0, v.y0, v.psi0)
    x, y, psi = _eval_route(segs, v.speed, tau)
    x = x + v.shift[0] + rng.normal(0.0, sc.position_noise, len(x))
    y = y + v.shift[1] + rng.normal(0.0, sc.position_noise, len(y))
    lat, lon = _unproject(v.anchor.lat, v.anchor.lon, x, y)
    sog = np.maximum(0.0, v.speed + rng.normal(0.0, 0.1, len(x)))
    cog = np.mod(90.0 - np.degrees(psi) + rng.normal(0.0, 1.0, len(x)), 360.0)
    cog = np.round(cog, 1)
    cog[cog >= 360.0] = 0.0
    return Records(np.full(len(off), v.mmsi), sc.start + off, np.round(lat, 6), np.round(lon, 6),
                   np.round(sog, 2), cog)


def _position_at(v: _Vessel, sc: Scenario, rng_seed, tau_target: float) -> tuple[float, float]:
    rng = np.random.default_rng(rng_seed)
    segs = _plan_route(rng, v.speed, v.home_radius, tau_target + 1.0, v.x0, v.y0, v.psi0)
    x, y, _ = _eval_route(segs, v.speed, np.array([tau_target]))
    return float(x[0]), float(y[0])


def _active_seconds(sc: Scenario, v: _Vessel, t_offset_s: float) -> float:
    if sc.session_length is None:
        return t_offset_s
    day = math.floor(t_offset_s / DAY_S)
    return day * sc.session_length + (t_offset_s - day * DAY_S - v.session_start)


def generate_baseline(scenario: Scenario) -> tuple[Records, GroundTruth]:
    """Normal traffic plus every injection's actor vessels, all labeled normal."""
    sc = scenario
    rng = np.random.default_rng([sc.seed, 0])
    truth = GroundTruth(sc.seed, sc.start)
    iv_ms = int(round(sc.report_interval * 1000))
    L = sc.session_length
    dlat = math.degrees(sc.margin / EARTH_RADIUS_M)
    vessels: list[tuple[_Vessel, int]] = []
    for k in range(sc.n_vessels):
        r = sc.region
        lat_lo, lat_hi = r.lat_min + dlat, r.lat_max - dlat
        if lat_lo >= lat_hi:
            lat_lo = lat_hi = 0.5 * (r.lat_min + r.lat_max)
        lat = rng.uniform(lat_lo, lat_hi)
        dlon = dlat / math.cos(math.radians(lat))
        lon_lo, lon_hi = r.lon_min + dlon, r.lon_max - dlon
        if lon_lo >= lon_hi:
            lon_lo = lon_hi = 0.5 * (r.lon_min + r.lon_max)
        lon = rng.uniform(lon_lo, lon_hi)
        v = _Vessel(BACKGROUND_MMSI + k, GeoPos(lat, lon), rng.uniform(2.0, 12.0),
                    int(rng.integers(0, iv_ms)), rng.uniform(0.0, DAY_S - L) if L else 0.0,
                    sc.home_radius, rng.uniform(-math.pi, math.pi))
        vessels.append((v, int(rng.integers(0, 2**62))))

    next_actor = ACTOR_MMSI
    for inj in sc.injections:
        arng = np.random.default_rng([sc.seed, 1, inj.id])
        t0, t1 = inj.windows()[0]
        mid = 0.5 * (t0 + t1)
        session_start = 0.0
        if L:
            tod = mid - math.floor(mid / DAY_S) * DAY_S
            session_start = float(np.clip(tod - arng.uniform(0.3, 0.7) * L, 0.0, DAY_S - L))
        spawn_r = inj.params.get("spawn_radius") or 0.5 * inj.radius
        home_r = inj.params.get("home_radius", sc.home_radius)
        mmsis = []
        phases: set[int] = set()
        for a in range(inj.n_vessels):
            if inj.kind in (InjectionKind.SPOOFING, InjectionKind.JAMMING):
                rr = spawn_r * math.sqrt(arng.random())
                th = arng.uniform(0, 2 * math.pi)
                target = (rr * math.cos(th), rr * math.sin(th))
            elif inj.kind is InjectionKind.MMSI_DUPLICATION and a == 1:
                target = (inj.params["separation"], 0.0)
            else:
                target = (0.0, 0.0)
            phase = int(arng.integers(0, iv_ms))
            while phase in phases:
                phase = int(arng.integers(0, iv_ms))
            phases.add(phase)
            v = _Vessel(next_actor, inj.center, arng.uniform(2.0, 12.0), phase, session_start, home_r,
                        arng.uniform(-math.pi, math.pi))
            route_seed = int(arng.integers(0, 2**62))
            tau_mid = _active_seconds(sc, v, mid)
            px, py = _position_at(v, sc, route_seed, max(tau_mid, 0.0))
            v.shift = (target[0] - px, target[1] - py)
            vessels.append((v, route_seed))
            mmsis.append(next_actor)
            next_actor += 1
        truth.actors[inj.id] = mmsis

    parts = [_vessel_records(sc, v, np.random.default_rng(seed)) for v, seed in vessels]
    recs = Records.concat(parts).sorted() if parts else Records.empty()
    return recs, truth


# --- injections ----------------------------------------------------------------------


def _window_mask(recs: Records, start: int, a: float, b: float) -> np.ndarray:
    return (recs.t >= start + int(round(a * 1000))) & (recs.t <= start + int(round(b * 1000)))


def _in_radius(recs: Records, center: GeoPos, radius: float) -> np.ndarray:
    return haversine_array(center.lat, center.lon, recs.lat, recs.lon) <= radius


def _event(inj: Injection, mmsis, t0, t1, center, n) -> TruthEvent:
    return TruthEvent(inj.kind, inj.id, tuple(sorted({int(m) for m in mmsis})), int(t0), int(t1),
                      center, inj.radius, int(n))


def inject(records: Records, truth: GroundTruth, injection: Injection) -> tuple[Records, GroundTruth]:
    """Apply one injection; returns new records (canonical order) and truth."""
    inj = injection
    rng = np.random.default_rng([truth.seed, 2, inj.id])
    truth = truth.copy()
    recs = records.copy()
    start = truth.start
    actors = np.array(truth.actors.get(inj.id, []), dtype=np.int64)
    kind = inj.kind.value

    if inj.kind is InjectionKind.SPOOFING:
        a, b = inj.window
        m = _window_mask(recs, start, a, b) & _in_radius(recs, inj.center, inj.radius)
        if not m.any():
            raise ValueError(f"spoofing injection {inj.id} affects no records")
        east, north = inj.params["displacement"]
        lat0 = recs.lat[m]
        recs.lat[m] = np.round(lat0 + np.degrees(north / EARTH_RADIUS_M), 6)
        recs.lon[m] = np.round(
            recs.lon[m] + np.degrees(east / (EARTH_RADIUS_M * np.cos(np.radians(lat0)))), 6)
        for mm, t in zip(recs.mmsi[m].tolist(), recs.t[m].tolist()):
            truth.labels[(mm, t)] = kind
        truth.events.append(_event(inj, recs.mmsi[m], start + a * 1000, start + b * 1000, inj.center, m.sum()))

    elif inj.kind is InjectionKind.JAMMING:
        a, b = inj.window
        on, off = inj.params["on"], inj.params["off"]
        drop = np.zeros(len(recs), dtype=bool)
        s = a
        last_end = a
        while s <= b:
            e = min(s + on, b)
            drop |= _window_mask(recs, start, s, e)
            last_end = e
            s += on + off
        drop &= _in_radius(recs, inj.center, inj.radius)
        if not drop.any():
            raise ValueError(f"jamming injection {inj.id} affects no records")
        for mm, t in zip(recs.mmsi[drop].tolist(), recs.t[drop].tolist()):
            truth.deleted.append((mm, t, kind))
            truth.labels.pop((mm, t), None)
        truth.events.append(_event(inj, recs.mmsi[drop], start + a * 1000, start + last_end * 1000,
                                   inj.center, drop.sum()))
        recs = recs.take(~drop)

    elif inj.kind is InjectionKind.MMSI_DUPLICATION:
        if len(actors) < 2:
            raise ValueError("mmsi_duplication needs two actor vessels")
        victim, other = int(actors[0]), int(actors[1])
        a, b = inj.window
        w = _window_mask(recs, start, a, b)
        mv = w & (recs.mmsi == victim)
        mo = w & (recs.mmsi == other)
        if not mo.any():
            raise ValueError(f"mmsi_duplication injection {inj.id} affects no records")
        taken = set(recs.t[recs.mmsi == victim].tolist())
        new_t = recs.t[mo].copy()
        for k in range(len(new_t)):
            while int(new_t[k]) in taken:
                new_t[k] += 1
            taken.add(int(new_t[k]))
        recs.t[mo] = new_t
        recs.mmsi[mo] = victim
        both = mv | mo
        for mm, t in zip(recs.mmsi[both].tolist(), recs.t[both].tolist()):
            truth.labels[(mm, t)] = kind
        ts = recs.t[both]
        truth.events.append(_event(inj, [victim], ts.min(), ts.max(), inj.center, both.sum()))

    elif inj.kind is InjectionKind.STALE_RETRANSMISSION:
        if len(actors) < 1:
            raise ValueError("stale_retransmission needs an actor vessel")
        victim = int(actors[0])
        a, b = inj.window
        idx = np.nonzero(_window_mask(recs, start, a, b) & (recs.mmsi == victim))[0]
        if len(idx) == 0:
            raise ValueError(f"stale_retransmission injection {inj.id} affects no records")
        count = min(int(inj.params["count"]), len(idx))
        pick = idx[np.unique(np.linspace(0, len(idx) - 1, count).round().astype(int))]
        delay = int(round(inj.params["delay"] * 1000))
        taken = set(recs.t[recs.mmsi == victim].tolist())
        rb = recs.take(pick)
        new_t = rb.t + delay
        for k in range(len(new_t)):
            while int(new_t[k]) in taken:
                new_t[k] += 1
            taken.add(int(new_t[k]))
        rb.t = new_t
        for mm, t in zip(rb.mmsi.tolist(), rb.t.tolist()):
            truth.labels[(mm, t)] = kind
        truth.events.append(_event(inj, [victim], rb.t.min(), rb.t.max(), inj.center, len(rb)))
        recs = Records.concat([recs, rb])

    else:  # sensor artifacts
        if len(actors) < 1:
            raise ValueError(f"{kind} needs an actor vessel")
        victim = int(actors[0])
        area = _offset(inj.center, *inj.params["offset"])
        n_total = 0
        for a, b in inj.windows():
            m = _window_mask(recs, start, a, b) & (recs.mmsi == victim)
            sel = np.nonzero(m)[0]
            sel = sel[rng.random(len(sel)) < inj.params["p_excursion"]]
            if len(sel) == 0:
                continue
            rr = inj.radius * np.sqrt(rng.random(len(sel)))
            th = rng.uniform(0, 2 * math.pi, len(sel))
            lat, lon = _unproject(area.lat, area.lon, rr * np.cos(th), rr * np.sin(th))
            recs.lat[sel] = np.round(lat, 6)
            recs.lon[sel] = np.round(lon, 6)
            for mm, t in zip(recs.mmsi[sel].tolist(), recs.t[sel].tolist()):
                truth.labels[(mm, t)] = kind
            truth.events.append(_event(inj, [victim], start + a * 1000, start + b * 1000, area, len(sel)))
            n_total += len(sel)
        if n_total == 0:
            raise ValueError(f"{kind} injection {inj.id} affects no records")

    return recs.sorted(), truth


def synthesize(scenario: Scenario, enabled: bool = True) -> tuple[Records, GroundTruth]:
    """Baseline traffic with every injection applied (or none, when disabled).

    Actor vessels are generated either way so that disabling injections leaves
    the same traffic."""
    recs, truth = generate_baseline(scenario)
    if enabled:
        for inj in scenario.injections:
            recs, truth = inject(recs, truth, inj)
    return recs, truth


# --- serialization -----------------------------------------------------------------


def truth_lines(truth: GroundTruth) -> Iterable[str]:
    for e in truth.events:
        yield json.dumps({"type": "event", "kind": e.kind.value, "injection_id": e.injection_id,
                          "mmsis": list(e.mmsis), "t_start": format_timestamp(e.t_start),
                          "t_end": format_timestamp(e.t_end),
                          "center": {"lat": e.center.lat, "lon": e.center.lon},
                          "radius_m": e.radius, "n_records": e.n_records}, separators=(",", ":"))
    for (mm, t), lab in sorted(truth.labels.items()):
        yield json.dumps({"type": "label", "mmsi": mm, "t": format_timestamp(t), "label": lab},
                         separators=(",", ":"))
    for mm, t, lab in sorted(truth.deleted):
        yield json.dumps({"type": "deleted", "mmsi": mm, "t": format_timestamp(t), "label": lab},
                         separators=(",", ":"))
    for inj_id, mmsis in sorted(truth.actors.items()):
        yield json.dumps({"type": "actors", "injection_id": inj_id, "mmsis": mmsis}, separators=(",", ":"))
    yield json.dumps({"type": "meta", "seed": truth.seed, "start": format_timestamp(truth.start)},
                     separators=(",", ":"))


def write_scenario(out_dir: str | Path, records: Records, truth: GroundTruth,
                   scenario: Scenario | None = None) -> dict[str, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {"records": out / "records.ndjson", "truth": out / "truth.ndjson"}
    tmp = paths["records"].with_suffix(".ndjson.tmp")
    with open(tmp, "w", encoding="utf-8", newline="\n") as fh:
        write_ndjson(records, fh)
    tmp.replace(paths["records"])
    tmp = paths["truth"].with_suffix(".ndjson.tmp")
    with open(tmp, "w", encoding="utf-8", newline="\n") as fh:
        for line in truth_lines(truth):
            fh.write(line + "\n")
    tmp.replace(paths["truth"])
    if scenario is not None:
        paths["scenario"] = out / "scenario.json"
        paths["scenario"].write_text(json.dumps(scenario.to_dict(), indent=2) + "\n", encoding="utf-8")
    return paths


def read_truth(path: str | Path) -> GroundTruth:
    truth = GroundTruth(0, DEFAULT_START)
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            d = json.loads(line)
            typ = d.get("type")
            if typ == "event":
                truth.events.append(TruthEvent(
                    InjectionKind(d["kind"]), d["injection_id"], tuple(d["mmsis"]),
                    parse_timestamp(d["t_start"]), parse_timestamp(d["t_end"]),
                    GeoPos(d["center"]["lat"], d["center"]["lon"]), d["radius_m"], d["n_records"]))
            elif typ == "label":
                truth.labels[(d["mmsi"], parse_timestamp(d["t"]))] = d["label"]
            elif typ == "deleted":
                truth.deleted.append((d["mmsi"], parse_timestamp(d["t"]), d["label"]))
            elif typ == "actors":
                truth.actors[d["injection_id"]] = list(d["mmsis"])
            elif typ == "meta":
                truth.seed, truth.start = d["seed"], parse_timestamp(d["start"])
            else:
                raise ValueError(f"unknown truth line type {typ!r}")
    return truth


# --- evaluation ------------------------------------------------------------------------

EVALUATED = ("spoofing", "jamming", "persistent_sensor", "transient_sensor")
INTERFERENCE_KINDS = ("spoofing", "jamming")


@dataclass(frozen=True)
class EventSummary:
    category: str
    centroid: GeoPos
    t_start: int
    t_end: int
    mmsis: tuple[int, ...] = ()


def _category(e) -> str:
    c = e.category
    return c.value if isinstance(c, Enum) else str(c)


@dataclass
class CategoryMetrics:
    detected: int = 0
    truth: int = 0
    matched: int = 0
    false_alarms: int = 0

    @property
    def precision(self) -> float | None:
        return self.matched / self.detected if self.detected else None

    @property
    def recall(self) -> float | None:
        return self.matched / self.truth if self.truth else None

    def to_dict(self) -> dict[str, Any]:
        return {"detected": self.detected, "truth": self.truth, "matched": self.matched,
                "false_alarms": self.false_alarms, "precision": self.precision, "recall": self.recall}


@dataclass
class Metrics:
    per_category: dict[str, CategoryMetrics]
    matches: list[tuple[int, int]] = field(default_factory=list)
    baseline: "Metrics | None" = None

    @property
    def false_alarms(self) -> int:
        return sum(self.per_category[k].false_alarms for k in INTERFERENCE_KINDS)

    @property
    def false_alarm_reduction(self) -> float | None:
        if self.baseline is None or self.baseline.false_alarms == 0:
            return None
        return 1.0 - self.false_alarms / self.baseline.false_alarms

    def to_dict(self) -> dict[str, Any]:
        d = {"per_category": {k: v.to_dict() for k, v in self.per_category.items()},
             "false_alarms": self.false_alarms, "matches": [list(m) for m in self.matches]}
        if self.baseline is not None:
            d["baseline"] = self.baseline.to_dict()
            d["false_alarm_reduction"] = self.false_alarm_reduction
        return d


def _match(events, truth: GroundTruth, match_radius: float, match_window: float) -> Metrics:
    dets = [e for e in events if _category(e) in EVALUATED]
    tru = [t for t in truth.events if t.kind.value in EVALUATED]
    win = match_window * 1000
    cands = []
    for i, d in enumerate(dets):
        for j, t in enumerate(tru):
            if _category(d) != t.kind.value:
                continue
            dist = float(haversine_array(d.centroid.lat, d.centroid.lon, t.center.lat, t.center.lon))
            if dist > match_radius:
                continue
            if d.t_end + win < t.t_start or t.t_end + win < d.t_start:
                continue
            cands.append((dist, abs(d.t_start - t.t_start), i, j))
    cands.sort()
    used_d, used_t, matches = set(), set(), []
    for _, _, i, j in cands:
        if i in used_d or j in used_t:
            continue
        used_d.add(i)
        used_t.add(j)
        matches.append((i, j))
    per = {k: CategoryMetrics() for k in EVALUATED}
    for i, d in enumerate(dets):
        c = per[_category(d)]
        c.detected += 1
        if i in used_d:
            c.matched += 1
        else:
            c.false_alarms += 1
    for t in tru:
        per[t.kind.value].truth += 1
    return Metrics(per, sorted(matches))


def evaluate(events: Sequence, truth: GroundTruth, match_radius: float = 10_000.0,
             match_window: float = 1800.0, baseline_events: Sequence | None = None) -> Metrics:
    """Greedy one-to-one matching of detections to injected events.

    A detection matches a truth event of the same category when the centroid is
    within ``match_radius`` meters of the injection center and the time spans
    overlap after widening by ``match_window`` seconds. Unmatched detections are
    false alarms.
    """
    m = _match(events, truth, match_radius, match_window)
    if baseline_events is not None:
        m.baseline = _match(baseline_events, truth, match_radius, match_window)
    return m


# --- preset scenarios --------------------------------------------------------------------


def spoofing_scenario(seed: int = 0, n_background: int = 30) -> Scenario:
    c = GeoPos(34.2, 128.4)
    return Scenario(seed=seed, duration=3600.0, n_vessels=n_background, injections=[
        Injection(InjectionKind.SPOOFING, c, 18_000.0, (1800.0, 1820.0))])


def jamming_scenario(seed: int = 0, n_background: int = 30) -> Scenario:
    c = GeoPos(35.1, 129.6)
    return Scenario(seed=seed, duration=3600.0, n_vessels=n_background, injections=[
        Injection(InjectionKind.JAMMING, c, 21_000.0, (1500.0, 1500.0 + 200.0 + 420.0 + 200.0))])


def artifact_scenario(seed: int = 0, n_background: int = 20, days: int = 3) -> Scenario:
    """MMSI duplication, stale retransmission and both sensor-artifact kinds;
    no interference. Vessels report for a few hours per day."""
    rng = np.random.default_rng([seed, 99])

    def spot():
        return GeoPos(float(rng.uniform(33.2, 35.8)), float(rng.uniform(124.5, 131.5)))

    session = 4 * 3600.0
    w0 = 10 * 3600.0
    return Scenario(seed=seed, duration=days * DAY_S, n_vessels=n_background, session_length=session,
                    injections=[
                        Injection(InjectionKind.MMSI_DUPLICATION, spot(), 5000.0, (0.0, days * DAY_S)),
                        Injection(InjectionKind.STALE_RETRANSMISSION, spot(), 5000.0, (w0 - 1800.0, w0 + 1800.0),
                                  params={"count": 12}),
                        Injection(InjectionKind.PERSISTENT_SENSOR, spot(), 500.0, (w0, w0 + 300.0),
                                  params={"days": list(range(days))}),
                        Injection(InjectionKind.TRANSIENT_SENSOR, spot(), 500.0, (w0, w0 + 300.0),
                                  params={"days": [min(1, days - 1)]}),
                    ])
