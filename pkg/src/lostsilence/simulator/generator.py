"""Per-pixel stream generators and incident injection.

A pixel generator cycles round-robin through its phones, emitting one
status event every ``sleep_ms``: unReachable with probability
``lost_ratio``, Attached otherwise.  Incident phones lose signal once, at
their scheduled time, and are silent afterwards.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field
from typing import Optional

from ..geo import GeoPixel
from ..model import Status, StatusEvent
from .config import IncidentConfig

__all__ = [
    "Phone",
    "PixelState",
    "sleep_time_for_density",
    "place_phones",
    "generator_tick",
    "inject_incident",
    "loss_times",
]


def sleep_time_for_density(density: float, cycle_ms: int) -> Optional[int]:
    """Interval between emissions so that ``density`` phones report once per cycle.

    Returns None for an empty pixel, which emits nothing.
    """
    if cycle_ms <= 0:
        raise ValueError(f"cycle must be positive, got {cycle_ms}")
    if density < 0:
        raise ValueError(f"density must be >= 0, got {density}")
    if density == 0:
        return None
    return max(1, math.floor(cycle_ms / density))


@dataclass(slots=True)
class Phone:
    phone_id: str
    lat: float
    lon: float
    lost: bool


@dataclass
class PixelState:
    index: int
    pixel: GeoPixel
    lost_ratio: float
    phones: list = field(default_factory=list)
    sleep_ms: Optional[int] = None
    cursor: int = 0

    def recompute_sleep(self, cycle_ms: int) -> None:
        self.sleep_ms = sleep_time_for_density(len(self.phones), cycle_ms)

    def active(self) -> int:
        return sum(not p.lost for p in self.phones)


def place_phones(pixel: GeoPixel, count: int, rng: random.Random, tag: str = "") -> list[Phone]:
    """``count`` phones at fixed uniform positions strictly inside ``pixel``.

    Offsets are whole micro-degrees within +-0.000499 of the centre, so every
    position bins back to ``pixel``.
    """
    lat_base = pixel.lat_milli * 1000
    lon_base = pixel.lon_milli * 1000
    phones = []
    for k in range(count):
        dlat = int(rng.random() * 999) - 499
        dlon = int(rng.random() * 999) - 499
        phones.append(
            Phone(
                f"{pixel.lat_milli}_{pixel.lon_milli}_{tag}{k}",
                (lat_base + dlat) / 1e6,
                (lon_base + dlon) / 1e6,
                False,
            )
        )
    return phones


def generator_tick(state: PixelState, rng: random.Random, now: int) -> list[StatusEvent]:
    """Emit the next phone's status, skipping phones that are powered off."""
    phones = state.phones
    n = len(phones)
    for _ in range(n):
        phone = phones[state.cursor]
        state.cursor = (state.cursor + 1) % n
        if phone.lost:
            continue
        status = Status.UNREACHABLE if rng.random() < state.lost_ratio else Status.ATTACHED
        return [StatusEvent(phone.phone_id, phone.lat, phone.lon, status, now)]
    return []


def loss_times(inc: IncidentConfig) -> list[int]:
    """Loss instants spread evenly over ``[start, start + duration]``."""
    n = inc.phone_count
    if n == 1 or inc.duration == 0:
        return [inc.start_time] * n
    return [inc.start_time + (k * inc.duration) // (n - 1) for k in range(n)]


def inject_incident(
    inc: IncidentConfig,
    state: PixelState,
    rng: random.Random,
    cycle_ms: int,
    tag: str = "x",
) -> list[tuple[int, Phone]]:
    """Board ``inc.phone_count`` extra phones on ``state`` and schedule their loss.

    The phones join the pixel's round-robin until their loss time.
    """
    phones = place_phones(state.pixel, inc.phone_count, rng, tag=tag)
    state.phones.extend(phones)
    state.recompute_sleep(cycle_ms)
    return list(zip(loss_times(inc), phones))
