"""Lost-silence detection: geo-pixel binning, a continuous RDF stream query
engine, and a deterministic telecom scenario simulator."""

from .detector import Alert, BlindZoneList, Detector, MetricsReport, compute_metrics
from .engine import Engine, ResultRow
from .geo import GeoPixel, pixel_extent_meters, pixel_of
from .model import Status, StatusEvent, TimestampedTriple, decode_event, encode_event
from .rsp_query import ContinuousQuery, format_query, parse_query, validate

__version__ = "0.1.0"

__all__ = [
    "Alert",
    "BlindZoneList",
    "Detector",
    "MetricsReport",
    "compute_metrics",
    "Engine",
    "ResultRow",
    "GeoPixel",
    "pixel_extent_meters",
    "pixel_of",
    "Status",
    "StatusEvent",
    "TimestampedTriple",
    "decode_event",
    "encode_event",
    "ContinuousQuery",
    "format_query",
    "parse_query",
    "validate",
]
