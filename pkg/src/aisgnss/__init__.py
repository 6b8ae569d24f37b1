"""AIS-based detection of GNSS interference with communication-artifact filtering."""

from .config import BoundingBox, ConfigError, ImmConfig, PipelineConfig
from .geo import GeoPos, geodesic_distance
from .ingest import AisRecord, Records, Track, parse_records, read_records

__version__ = "0.1.0"

__all__ = [
    "AisRecord",
    "BoundingBox",
    "ConfigError",
    "GeoPos",
    "ImmConfig",
    "PipelineConfig",
    "Records",
    "Track",
    "geodesic_distance",
    "parse_records",
    "read_records",
    "__version__",
]
