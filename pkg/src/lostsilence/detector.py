"""Alerts from engine result rows: blind-zone suppression, first-detection
tracking, and run metrics (latency, fail-to-report, false alarms)."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterable, Optional, Protocol, TextIO

from .engine import ResultRow
from .geo import GeoPixel

__all__ = [
    "BlindZoneList",
    "Alert",
    "Detector",
    "IncidentReport",
    "MetricsReport",
    "filter_blind_zones",
    "classify_alerts",
    "compute_metrics",
    "read_blind_zones",
    "write_blind_zones",
    "write_alert_log",
    "read_alert_log",
]

PIXEL_KEYS = ("roundLat", "roundLong")


class BlindZoneList:
    """Static set of pixels without coverage, where mass loss is expected."""

    def __init__(self, pixels: Iterable = ()):
        self.pixels = frozenset(GeoPixel(int(a), int(b)) for a, b in pixels)

    def __contains__(self, pixel) -> bool:
        return pixel in self.pixels

    def __len__(self) -> int:
        return len(self.pixels)

    def __iter__(self):
        return iter(sorted(self.pixels))

    def __eq__(self, other) -> bool:
        return isinstance(other, BlindZoneList) and self.pixels == other.pixels

    def __repr__(self) -> str:
        return f"BlindZoneList({sorted(self.pixels)!r})"


def read_blind_zones(lines: Iterable[str]) -> BlindZoneList:
    """Parse ``lat_milli,lon_milli`` lines; ``#`` comments and blanks are skipped."""
    pixels = []
    for n, line in enumerate(lines, start=1):
        text = line.split("#", 1)[0].strip()
        if not text:
            continue
        parts = [p.strip() for p in text.split(",")]
        try:
            if len(parts) != 2:
                raise ValueError
            pixels.append((int(parts[0]), int(parts[1])))
        except ValueError:
            raise ValueError(f"blind-zone line {n}: expected 'lat_milli,lon_milli', got {text!r}") from None
    return BlindZoneList(pixels)


def write_blind_zones(bz: BlindZoneList, out: TextIO) -> None:
    for p in bz:
        out.write(f"{p.lat_milli},{p.lon_milli}\n")


def _pixel(row: ResultRow, keys=PIXEL_KEYS) -> GeoPixel:
    return GeoPixel(int(row[keys[0]]), int(row[keys[1]]))


def filter_blind_zones(rows: list[ResultRow], bz: BlindZoneList, keys=PIXEL_KEYS) -> list[ResultRow]:
    if not len(bz):
        return list(rows)
    return [r for r in rows if _pixel(r, keys) not in bz]


@dataclass(frozen=True)
class Alert:
    pixel: GeoPixel
    counter: int
    eval_time: int
    first_detection: bool

    def to_record(self) -> dict:
        return {
            "alert_time_ms": self.eval_time,
            "lat_milli": self.pixel.lat_milli,
            "lon_milli": self.pixel.lon_milli,
            "counter": self.counter,
            "first_detection": self.first_detection,
        }

    @classmethod
    def from_record(cls, rec: dict) -> "Alert":
        return cls(
            GeoPixel(int(rec["lat_milli"]), int(rec["lon_milli"])),
            int(rec["counter"]),
            int(rec["alert_time_ms"]),
            bool(rec["first_detection"]),
        )


def classify_alerts(
    rows: list[ResultRow],
    state: dict,
    keys=PIXEL_KEYS,
    counter: str = "counter",
) -> list[Alert]:
    """Turn one evaluation step's rows into alerts.

    ``state`` maps pixel -> above threshold at the previous step and is
    updated in place; pixels missing from ``rows`` drop back to False.
    """
    alerts = []
    above = set()
    for r in rows:
        pixel = _pixel(r, keys)
        above.add(pixel)
        alerts.append(Alert(pixel, int(r[counter]), r.eval_time, not state.get(pixel, False)))
    for pixel in [p for p, v in state.items() if v and p not in above]:
        state[pixel] = False
    for pixel in above:
        state[pixel] = True
    return alerts


class Detector:
    """Single consumer of one query's per-step results."""

    def __init__(self, blind_zones: Optional[BlindZoneList] = None, keys=PIXEL_KEYS, counter="counter"):
        self.blind_zones = blind_zones or BlindZoneList()
        self.keys = keys
        self.counter = counter
        self.state: dict[GeoPixel, bool] = {}
        self.alerts: list[Alert] = []
        self.last_time: Optional[int] = None

    def on_step(self, eval_time: int, rows: list[ResultRow]) -> list[Alert]:
        if self.last_time is not None and eval_time <= self.last_time:
            raise ValueError(f"steps must arrive in time order ({eval_time} after {self.last_time})")
        self.last_time = eval_time
        kept = filter_blind_zones(rows, self.blind_zones, self.keys)
        kept.sort(key=lambda r: _pixel(r, self.keys))
        new = classify_alerts(kept, self.state, self.keys, self.counter)
        self.alerts.extend(new)
        return new


class _Incident(Protocol):
    pixel: GeoPixel
    start_time: int
    phone_count: int


@dataclass
class IncidentReport:
    pixel: GeoPixel
    start_time: int
    phone_count: int
    detected: bool
    detection_latency_ms: Optional[int]
    first_alert_time: Optional[int]
    peak_counter: int

    def to_dict(self) -> dict:
        return {
            "lat_milli": self.pixel.lat_milli,
            "lon_milli": self.pixel.lon_milli,
            "start_time_ms": self.start_time,
            "phone_count": self.phone_count,
            "detected": self.detected,
            "detection_latency_ms": self.detection_latency_ms,
            "first_alert_time_ms": self.first_alert_time,
            "peak_counter": self.peak_counter,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "IncidentReport":
        return cls(
            GeoPixel(int(d["lat_milli"]), int(d["lon_milli"])),
            int(d["start_time_ms"]),
            int(d["phone_count"]),
            bool(d["detected"]),
            d["detection_latency_ms"],
            d["first_alert_time_ms"],
            int(d["peak_counter"]),
        )


@dataclass
class MetricsReport:
    incidents: list[IncidentReport]
    fail_to_report: int
    false_alarm: int
    false_alarm_pixels: list[GeoPixel]
    total_alerts: int
    first_detections: int
    series: dict = field(default_factory=dict)
    diagnostics: list[str] = field(default_factory=list)

    def to_dict(self, include_series: bool = False) -> dict:
        d = {
            "incidents": [i.to_dict() for i in self.incidents],
            "fail_to_report": self.fail_to_report,
            "false_alarm": self.false_alarm,
            "false_alarm_pixels": [list(p) for p in self.false_alarm_pixels],
            "total_alerts": self.total_alerts,
            "first_detections": self.first_detections,
            "diagnostics": list(self.diagnostics),
        }
        if include_series:
            d["series"] = {
                f"{p.lat_milli},{p.lon_milli}": [list(pt) for pt in pts]
                for p, pts in sorted(self.series.items())
            }
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "MetricsReport":
        series = {
            GeoPixel(*map(int, k.split(","))): [tuple(pt) for pt in pts]
            for k, pts in d.get("series", {}).items()
        }
        return cls(
            incidents=[IncidentReport.from_dict(i) for i in d["incidents"]],
            fail_to_report=int(d["fail_to_report"]),
            false_alarm=int(d["false_alarm"]),
            false_alarm_pixels=[GeoPixel(*p) for p in d["false_alarm_pixels"]],
            total_alerts=int(d["total_alerts"]),
            first_detections=int(d["first_detections"]),
            series=series,
            diagnostics=list(d.get("diagnostics", [])),
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def summary(self) -> str:
        lines = []
        for inc in self.incidents:
            status = (
                f"detected after {inc.detection_latency_ms} ms (peak {inc.peak_counter})"
                if inc.detected else "NOT detected"
            )
            lines.append(
                f"incident at {inc.pixel.lat_milli},{inc.pixel.lon_milli} "
                f"({inc.phone_count} phones, start {inc.start_time} ms): {status}"
            )
        lines.append(f"fail_to_report: {self.fail_to_report}")
        lines.append(f"false_alarm: {self.false_alarm}")
        lines.append(f"alerts: {self.total_alerts} ({self.first_detections} first detections)")
        lines.extend(f"diagnostic: {d}" for d in self.diagnostics)
        return "\n".join(lines) + "\n"


def compute_metrics(
    alerts: Iterable[Alert],
    incidents: Iterable[_Incident],
    monitored: Optional[dict] = None,
    covered: Optional[set] = None,
) -> MetricsReport:
    """Score an alert log against ground-truth incidents.

    ``monitored`` maps pixel -> [(eval_time, count), ...] and is carried into
    the report as the per-step series.  ``covered`` is the set of pixels some
    registered query evaluates; None means every pixel is covered.
    """
    alerts = list(alerts)
    incidents = list(incidents)
    incident_pixels = {GeoPixel(*i.pixel) for i in incidents}
    by_pixel: dict[GeoPixel, list[Alert]] = {}
    for a in alerts:
        by_pixel.setdefault(a.pixel, []).append(a)

    reports = []
    diagnostics = []
    for inc in incidents:
        pixel = GeoPixel(*inc.pixel)
        if covered is not None and pixel not in covered:
            diagnostics.append(
                f"COVERAGE_GAP: no registered query evaluates incident pixel "
                f"{pixel.lat_milli},{pixel.lon_milli}"
            )
        here = [a for a in by_pixel.get(pixel, []) if a.eval_time >= inc.start_time]
        firsts = [a.eval_time for a in here if a.first_detection]
        first = min(firsts) if firsts else None
        reports.append(
            IncidentReport(
                pixel=pixel,
                start_time=inc.start_time,
                phone_count=inc.phone_count,
                detected=first is not None,
                detection_latency_ms=None if first is None else first - inc.start_time,
                first_alert_time=first,
                peak_counter=max((a.counter for a in here), default=0),
            )
        )
    false = [a for a in alerts if a.pixel not in incident_pixels]
    return MetricsReport(
        incidents=reports,
        fail_to_report=sum(not r.detected for r in reports),
        false_alarm=len(false),
        false_alarm_pixels=sorted({a.pixel for a in false}),
        total_alerts=len(alerts),
        first_detections=sum(a.first_detection for a in alerts),
        series=dict(monitored or {}),
        diagnostics=diagnostics,
    )


def write_alert_log(alerts: Iterable[Alert], out: TextIO) -> None:
    for a in alerts:
        out.write(json.dumps(a.to_record()) + "\n")


def read_alert_log(lines: Iterable[str]) -> list[Alert]:
    return [Alert.from_record(json.loads(line)) for line in lines if line.strip()]
