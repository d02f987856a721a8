"""Scenario configuration and its TOML file format.

Example::

    name = "eastern-star"
    seed = 7
    run_length = "10m"
    update_period = "30m"          # location update cycle and default window
    blind_zones = [[329870, 246750]]
    monitor = [[329863, 246792]]

    [engine]
    step = "5s"
    query = "detect"               # bundled query name or a path
    query_mode = "global"          # or "per-pixel"
    clock = "virtual"              # or "realtime"
    coords = "permissive"          # or "strict"

    [[zones]]
    name = "Rongcheng Town"
    pixels = 7024                  # or an explicit [[lat, lon], ...] list
    density = 21                   # phones per pixel, or phones = <total>
    lost_ratio = 0.001
    origin = [329900, 246000]
    columns = 100

    [[incidents]]
    name = "Eastern Star"
    pixel = [329863, 246792]
    phones = 424
    start = 301234                 # ms, or a duration string
    duration = "0s"
"""

from __future__ import annotations

import dataclasses
import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any, Optional, Union

try:
    import tomllib
except ImportError:  # Python < 3.11
    import tomli as tomllib

from ..geo import GeoError, GeoPixel, pixel_of
from ..rsp_query import DURATION_UNITS

__all__ = [
    "ConfigError",
    "ZoneConfig",
    "IncidentConfig",
    "ScenarioConfig",
    "parse_duration",
    "load_config",
    "config_from_dict",
    "bundled_preset",
    "list_presets",
    "DEFAULT_LOST_RATIO",
]

DEFAULT_LOST_RATIO = 0.001
DEFAULT_UPDATE_PERIOD_MS = 30 * 60_000

CLOCK_MODES = ("virtual", "realtime")
QUERY_MODES = ("per-pixel", "global")
COORD_MODES = ("strict", "permissive")


class ConfigError(ValueError):
    pass


_DURATION = re.compile(r"\s*(\d+(?:\.\d+)?)\s*(ms|s|m|h)\s*", re.I)


def parse_duration(value: Union[int, str], what: str = "duration") -> int:
    """Milliseconds from an integer or a string such as ``"30m"`` or ``"5s"``."""
    if isinstance(value, bool):
        raise ConfigError(f"{what}: expected a duration, got {value!r}")
    if isinstance(value, int):
        return value
    if isinstance(value, float) and value.is_integer():
        return int(value)
    if isinstance(value, str):
        m = _DURATION.fullmatch(value)
        if m:
            ms = float(m.group(1)) * DURATION_UNITS[m.group(2).lower()]
            if ms.is_integer():
                return int(ms)
    raise ConfigError(f"{what}: expected a duration like 30m, 5s or 250ms, got {value!r}")


@dataclass
class ZoneConfig:
    name: str
    pixel_count: int = 0
    density: int = 0
    phones: Optional[int] = None
    lost_ratio: float = DEFAULT_LOST_RATIO
    origin: tuple = (0, 0)
    columns: int = 1000
    pixels: Optional[list] = None

    def pixel_list(self) -> list[GeoPixel]:
        if self.pixels is not None:
            return [GeoPixel(int(a), int(b)) for a, b in self.pixels]
        lat0, lon0 = self.origin
        return [
            GeoPixel(lat0 + i // self.columns, lon0 + i % self.columns)
            for i in range(self.pixel_count)
        ]

    def populations(self) -> list[int]:
        n = len(self.pixels) if self.pixels is not None else self.pixel_count
        if self.phones is None:
            return [self.density] * n
        if n == 0:
            return []
        base, extra = divmod(self.phones, n)
        return [base + (1 if i < extra else 0) for i in range(n)]

    def total_phones(self) -> int:
        return sum(self.populations())


@dataclass
class IncidentConfig:
    pixel: GeoPixel
    phone_count: int
    start_time: int
    duration: int = 0
    name: str = ""

    @property
    def end_time(self) -> int:
        return self.start_time + self.duration


@dataclass
class ScenarioConfig:
    zones: list = field(default_factory=list)
    incidents: list = field(default_factory=list)
    blind_zones: list = field(default_factory=list)
    monitored: list = field(default_factory=list)
    update_period_ms: int = DEFAULT_UPDATE_PERIOD_MS
    cycle_ms: Optional[int] = None
    step_ms: int = 5000
    window_ms: Optional[int] = None
    run_length_ms: int = 10 * 60_000
    seed: int = 0
    clock: str = "virtual"
    query_mode: str = "per-pixel"
    coords: str = "permissive"
    query: str = "detect"
    realtime_speed: float = 1.0
    workers: int = 1
    emit_detached: bool = True
    name: str = "scenario"
    base_dir: Optional[str] = None

    @property
    def window_range_ms(self) -> int:
        return self.window_ms if self.window_ms is not None else self.update_period_ms

    @property
    def emission_cycle_ms(self) -> int:
        return self.cycle_ms if self.cycle_ms is not None else self.update_period_ms

    def total_pixels(self) -> int:
        return sum(len(z.pixel_list()) for z in self.zones)

    def total_phones(self) -> int:
        return sum(z.total_phones() for z in self.zones)

    def replace(self, **changes) -> "ScenarioConfig":
        return dataclasses.replace(self, **changes)

    def validate(self) -> "ScenarioConfig":
        """Raise :class:`ConfigError` naming the first offending field."""
        def need(cond: bool, where: str, message: str) -> None:
            if not cond:
                raise ConfigError(f"{where}: {message}")

        need(self.run_length_ms > 0, "run_length", "must be positive")
        need(self.update_period_ms > 0, "update_period", "must be positive")
        need(self.emission_cycle_ms > 0, "cycle", "must be positive")
        need(self.step_ms > 0, "engine.step", "must be positive")
        need(self.window_range_ms >= self.step_ms, "engine.window", "must be at least the step")
        need(self.clock in CLOCK_MODES, "engine.clock", f"must be one of {CLOCK_MODES}")
        need(self.query_mode in QUERY_MODES, "engine.query_mode", f"must be one of {QUERY_MODES}")
        need(self.coords in COORD_MODES, "engine.coords", f"must be one of {COORD_MODES}")
        need(self.realtime_speed > 0, "engine.realtime_speed", "must be positive")
        need(self.workers >= 1, "engine.workers", "must be at least 1")
        strict = self.coords == "strict"
        seen: dict[GeoPixel, str] = {}
        for i, z in enumerate(self.zones):
            where = f"zones[{i}]"
            need(bool(z.name), f"{where}.name", "must be non-empty")
            need(z.pixel_count >= 0, f"{where}.pixels", "must be >= 0")
            need(z.density >= 0, f"{where}.density", "must be >= 0")
            need(z.phones is None or z.phones >= 0, f"{where}.phones", "must be >= 0")
            need(0 <= z.lost_ratio <= 1, f"{where}.lost_ratio", "must lie in [0, 1]")
            need(z.columns >= 1, f"{where}.columns", "must be >= 1")
            for p in z.pixel_list():
                if p in seen:
                    raise ConfigError(f"{where}.pixels: pixel {p.lat_milli},{p.lon_milli} already in zone {seen[p]!r}")
                seen[p] = z.name
            if strict:
                for p in z.pixel_list()[:1] + z.pixel_list()[-1:]:
                    self._check_strict(p, f"{where}.pixels")
        for i, inc in enumerate(self.incidents):
            where = f"incidents[{i}]"
            need(inc.phone_count >= 1, f"{where}.phones", "must be >= 1")
            need(inc.duration >= 0, f"{where}.duration", "must be >= 0")
            need(inc.start_time >= 0, f"{where}.start", "must be >= 0")
            if strict:
                self._check_strict(inc.pixel, f"{where}.pixel")
        for what, pixels in (("blind_zones", self.blind_zones), ("monitor", self.monitored)):
            for p in pixels:
                if strict:
                    self._check_strict(GeoPixel(*p), what)
        return self

    @staticmethod
    def _check_strict(p: GeoPixel, where: str) -> None:
        try:
            pixel_of(p.lat_milli / 1000, p.lon_milli / 1000, strict=True)
        except GeoError as exc:
            raise ConfigError(f"{where}: {exc} (strict coordinates)") from None


# --- file loading -----------------------------------------------------------

_TOP_KEYS = {
    "name", "seed", "run_length", "update_period", "cycle", "blind_zones", "monitor",
    "engine", "zones", "incidents",
}
_ENGINE_KEYS = {"step", "window", "query", "query_mode", "clock", "coords", "realtime_speed", "workers", "emit_detached"}
_ZONE_KEYS = {"name", "pixels", "density", "phones", "lost_ratio", "origin", "columns"}
_INCIDENT_KEYS = {"name", "pixel", "phones", "start", "duration"}


def _check_keys(table: Any, allowed: set, where: str) -> dict:
    if not isinstance(table, dict):
        raise ConfigError(f"{where or 'config'}: expected a table")
    for key in table:
        if key not in allowed:
            name = f"{where}.{key}" if where else key
            raise ConfigError(f"unknown config key {name!r}")
    return table


def _pixel(value: Any, where: str) -> GeoPixel:
    if (
        isinstance(value, (list, tuple)) and len(value) == 2
        and all(isinstance(v, int) and not isinstance(v, bool) for v in value)
    ):
        return GeoPixel(int(value[0]), int(value[1]))
    raise ConfigError(f"{where}: expected [lat_milli, lon_milli], got {value!r}")


def _int(value: Any, where: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(f"{where}: expected an integer, got {value!r}")
    return value


def _str(value: Any, where: str) -> str:
    if not isinstance(value, str):
        raise ConfigError(f"{where}: expected a string, got {value!r}")
    return value


def config_from_dict(data: dict, base_dir: Optional[str] = None) -> ScenarioConfig:
    _check_keys(data, _TOP_KEYS, "")
    cfg = ScenarioConfig(base_dir=base_dir)
    if "name" in data:
        cfg.name = _str(data["name"], "name")
    if "seed" in data:
        cfg.seed = _int(data["seed"], "seed")
    if "run_length" in data:
        cfg.run_length_ms = parse_duration(data["run_length"], "run_length")
    if "update_period" in data:
        cfg.update_period_ms = parse_duration(data["update_period"], "update_period")
    if "cycle" in data:
        cfg.cycle_ms = parse_duration(data["cycle"], "cycle")
    cfg.blind_zones = [_pixel(p, "blind_zones") for p in data.get("blind_zones", [])]
    cfg.monitored = [_pixel(p, "monitor") for p in data.get("monitor", [])]

    eng = _check_keys(data.get("engine", {}), _ENGINE_KEYS, "engine")
    if "step" in eng:
        cfg.step_ms = parse_duration(eng["step"], "engine.step")
    if "window" in eng:
        cfg.window_ms = parse_duration(eng["window"], "engine.window")
    for key, attr in (("query", "query"), ("query_mode", "query_mode"), ("clock", "clock"), ("coords", "coords")):
        if key in eng:
            setattr(cfg, attr, _str(eng[key], f"engine.{key}"))
    if "realtime_speed" in eng:
        speed = eng["realtime_speed"]
        if isinstance(speed, bool) or not isinstance(speed, (int, float)):
            raise ConfigError(f"engine.realtime_speed: expected a number, got {speed!r}")
        cfg.realtime_speed = float(speed)
    if "workers" in eng:
        cfg.workers = _int(eng["workers"], "engine.workers")
    if "emit_detached" in eng:
        if not isinstance(eng["emit_detached"], bool):
            raise ConfigError("engine.emit_detached: expected true or false")
        cfg.emit_detached = eng["emit_detached"]

    for i, z in enumerate(data.get("zones", [])):
        where = f"zones[{i}]"
        _check_keys(z, _ZONE_KEYS, where)
        zone = ZoneConfig(name=_str(z.get("name", f"zone{i}"), f"{where}.name"))
        pixels = z.get("pixels", 0)
        if isinstance(pixels, list):
            zone.pixels = [_pixel(p, f"{where}.pixels") for p in pixels]
        else:
            zone.pixel_count = _int(pixels, f"{where}.pixels")
        if "density" in z:
            zone.density = _int(z["density"], f"{where}.density")
        if "phones" in z:
            zone.phones = _int(z["phones"], f"{where}.phones")
        if "lost_ratio" in z:
            lr = z["lost_ratio"]
            if isinstance(lr, bool) or not isinstance(lr, (int, float)):
                raise ConfigError(f"{where}.lost_ratio: expected a number, got {lr!r}")
            zone.lost_ratio = float(lr)
        if "origin" in z:
            zone.origin = tuple(_pixel(z["origin"], f"{where}.origin"))
        if "columns" in z:
            zone.columns = _int(z["columns"], f"{where}.columns")
        cfg.zones.append(zone)

    for i, inc in enumerate(data.get("incidents", [])):
        where = f"incidents[{i}]"
        _check_keys(inc, _INCIDENT_KEYS, where)
        for required in ("pixel", "phones", "start"):
            if required not in inc:
                raise ConfigError(f"{where}.{required}: missing")
        cfg.incidents.append(
            IncidentConfig(
                pixel=_pixel(inc["pixel"], f"{where}.pixel"),
                phone_count=_int(inc["phones"], f"{where}.phones"),
                start_time=parse_duration(inc["start"], f"{where}.start"),
                duration=parse_duration(inc.get("duration", 0), f"{where}.duration"),
                name=_str(inc.get("name", ""), f"{where}.name"),
            )
        )
    return cfg.validate()


def list_presets() -> list[str]:
    root = resources.files("lostsilence") / "presets"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".toml"))


def bundled_preset(name: str) -> Path:
    path = resources.files("lostsilence") / "presets" / f"{name}.toml"
    if not path.is_file():
        raise ConfigError(f"no bundled preset named {name!r} (have: {', '.join(list_presets())})")
    return Path(str(path))


def load_config(path_or_preset: Union[str, Path]) -> ScenarioConfig:
    """Load a TOML scenario file, or a bundled preset by bare name."""
    path = Path(path_or_preset)
    if not path.exists() and path.suffix == "" and "/" not in str(path_or_preset):
        path = bundled_preset(str(path_or_preset))
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    return config_from_dict(data, base_dir=str(path.resolve().parent))
