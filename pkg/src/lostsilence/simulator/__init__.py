"""Deterministic Jianli-style scenario simulation."""

from .config import (
    DEFAULT_LOST_RATIO,
    ConfigError,
    IncidentConfig,
    ScenarioConfig,
    ZoneConfig,
    bundled_preset,
    config_from_dict,
    list_presets,
    load_config,
    parse_duration,
)
from .generator import (
    Phone,
    PixelState,
    generator_tick,
    inject_incident,
    loss_times,
    place_phones,
    sleep_time_for_density,
)
from .runner import (
    ReplayResult,
    RunResult,
    World,
    build_query,
    load_query_text,
    pixel_stream_iri,
    replay_log,
    run_scenario,
    split_events,
)

__all__ = [
    "DEFAULT_LOST_RATIO",
    "ConfigError",
    "IncidentConfig",
    "ScenarioConfig",
    "ZoneConfig",
    "bundled_preset",
    "config_from_dict",
    "list_presets",
    "load_config",
    "parse_duration",
    "Phone",
    "PixelState",
    "generator_tick",
    "inject_incident",
    "loss_times",
    "place_phones",
    "sleep_time_for_density",
    "RunResult",
    "World",
    "build_query",
    "load_query_text",
    "pixel_stream_iri",
    "run_scenario",
    "ReplayResult",
    "replay_log",
    "split_events",
]
