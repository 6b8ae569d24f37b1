"""Pipeline configuration: every detection threshold plus the IMM filter tuning.

IMM noise levels, the persistence fraction and the coastal distance are
engineering defaults; everything is configurable.
"""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any


class ConfigError(ValueError):
    """Invalid or unknown configuration content."""


@dataclass(frozen=True)
class BoundingBox:
    lat_min: float = 32.0
    lat_max: float = 37.0
    lon_min: float = 123.0
    lon_max: float = 133.0

    def __post_init__(self):
        if not (self.lat_min < self.lat_max and self.lon_min < self.lon_max):
            raise ConfigError(f"degenerate bounding box: {self}")
        if not (-90 <= self.lat_min and self.lat_max <= 90):
            raise ConfigError("bbox latitude out of range")
        if not (-180 <= self.lon_min and self.lon_max <= 180):
            raise ConfigError("bbox longitude out of range")

    def contains(self, lat: float, lon: float) -> bool:
        return self.lat_min <= lat <= self.lat_max and self.lon_min <= lon <= self.lon_max


@dataclass(frozen=True)
class ImmConfig:
    """Noise model and mode switching for the CV/CTRV IMM filter.

    Angles are radians except ``sigma_cog_deg`` and ``p0_heading_deg``.
    """

    sigma_pos: float = 10.0
    sigma_sog: float = 0.5
    sigma_cog_deg: float = 5.0
    sigma_acc: float = 0.5
    sigma_yaw_acc_cv: float = 0.0005
    sigma_yaw_acc_ctrv: float = 0.005
    transition: tuple[tuple[float, float], tuple[float, float]] = ((0.95, 0.05), (0.05, 0.95))
    mu0: tuple[float, float] = (0.5, 0.5)
    ctrv_yaw_epsilon: float = 1e-4
    p0_speed: float = 2.0
    p0_heading_deg: float = 10.0
    p0_yaw_rate: float = 0.05
    max_dt: float = 600.0
    reanchor_distance: float = 200_000.0

    def __post_init__(self):
        object.__setattr__(self, "transition", tuple(tuple(float(v) for v in row) for row in self.transition))
        object.__setattr__(self, "mu0", tuple(float(v) for v in self.mu0))
        positive = (
            "sigma_pos", "sigma_sog", "sigma_cog_deg", "sigma_acc", "sigma_yaw_acc_cv",
            "sigma_yaw_acc_ctrv", "ctrv_yaw_epsilon", "p0_speed", "p0_heading_deg",
            "p0_yaw_rate", "max_dt", "reanchor_distance",
        )
        for name in positive:
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise ConfigError(f"imm.{name} must be a positive finite number, got {v!r}")
        if len(self.transition) != 2 or any(len(r) != 2 for r in self.transition):
            raise ConfigError("imm.transition must be 2x2")
        for row in self.transition:
            if any(v < 0 for v in row) or abs(sum(row) - 1.0) > 1e-9:
                raise ConfigError(f"imm.transition rows must be stochastic, got {row}")
        if len(self.mu0) != 2 or any(v < 0 for v in self.mu0) or abs(sum(self.mu0) - 1.0) > 1e-9:
            raise ConfigError(f"imm.mu0 must be a probability vector, got {self.mu0}")


@dataclass(frozen=True)
class PipelineConfig:
    # preprocessing
    d_scatter: float = 116.9
    # communication integrity (MMSI duplication sub-track extraction)
    eps_space_dup: float = 3600.0
    eps_time_dup: float = 900.0
    eps_speed_dup: float = 2.0
    eps_heading_dup: float = 30.0
    subtrack_min_duration: float = 600.0
    # cue generation
    v_th: float = 30.0
    kappa: float = 3.0
    t_min: float = 60.0
    sog_normal_min: float = 1.0
    # clustering and categorization
    eps_s: float = 10_000.0
    eps_t: float = 1800.0
    min_pts: int = 5
    th_group: float = 0.60
    min_event_mmsis: int = 5
    t_single_coastal: float = 120.0
    t_single_offshore: float = 900.0
    persistence_day_fraction: float = 0.8
    coastal_distance_m: float = 10_000.0
    coastline: str | None = None
    # ingestion and run control
    sog_unit: str = "mps"
    max_error_ratio: float = 0.01
    imm: ImmConfig = field(default_factory=ImmConfig)
    bbox: BoundingBox = field(default_factory=BoundingBox)

    def __post_init__(self):
        positive = (
            "d_scatter", "eps_space_dup", "eps_time_dup", "eps_speed_dup", "eps_heading_dup",
            "subtrack_min_duration", "v_th", "kappa", "t_min", "sog_normal_min", "eps_s",
            "eps_t", "th_group", "t_single_coastal", "t_single_offshore",
            "persistence_day_fraction", "coastal_distance_m", "max_error_ratio",
        )
        for name in positive:
            v = getattr(self, name)
            if isinstance(v, bool) or not isinstance(v, (int, float)) or not (math.isfinite(v) and v > 0):
                raise ConfigError(f"{name} must be a positive finite number, got {v!r}")
        if self.th_group > 1:
            raise ConfigError("th_group must lie in (0, 1]")
        if self.persistence_day_fraction > 1:
            raise ConfigError("persistence_day_fraction must lie in (0, 1]")
        for name in ("min_pts", "min_event_mmsis"):
            v = getattr(self, name)
            if isinstance(v, bool) or not isinstance(v, int) or v < 1:
                raise ConfigError(f"{name} must be an integer >= 1, got {v!r}")
        if self.sog_unit not in ("mps", "knots"):
            raise ConfigError(f"sog_unit must be 'mps' or 'knots', got {self.sog_unit!r}")

    # --- serialization -------------------------------------------------

    def to_dict(self) -> dict[str, Any]:
        d = dataclasses.asdict(self)
        d["imm"]["transition"] = [list(r) for r in self.imm.transition]
        d["imm"]["mu0"] = list(self.imm.mu0)
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "PipelineConfig":
        if not isinstance(data, dict):
            raise ConfigError("config document must be a JSON object")
        data = dict(data)
        imm = _build(ImmConfig, data.pop("imm", {}) or {}, "imm.")
        bbox = _build(BoundingBox, data.pop("bbox", {}) or {}, "bbox.")
        known = {f.name for f in dataclasses.fields(cls)} - {"imm", "bbox"}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        try:
            return cls(imm=imm, bbox=bbox, **data)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None

    @classmethod
    def from_json(cls, text: str) -> "PipelineConfig":
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from None
        return cls.from_dict(data)

    @classmethod
    def load(cls, path: str | Path) -> "PipelineConfig":
        return cls.from_json(Path(path).read_text(encoding="utf-8"))


def _build(klass, data, prefix):
    if not isinstance(data, dict):
        raise ConfigError(f"{prefix[:-1]} must be a JSON object")
    known = {f.name for f in dataclasses.fields(klass)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(prefix + k for k in unknown)}")
    try:
        return klass(**data)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None
