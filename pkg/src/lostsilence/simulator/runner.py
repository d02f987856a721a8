"""Scenario driver: generators -> engine -> detector under a virtual or paced clock.

Emissions are ordered by ``(timestamp, pixel index, sequence)``.  Before an
emission at ``t`` is ingested the engine clock is advanced to ``t - 1``, so
every evaluation at time ``T`` sees exactly the events stamped ``<= T``.
"""

from __future__ import annotations

import dataclasses
import heapq
import logging
import queue
import random
import threading
import time
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Callable, Iterator, Optional

from ..detector import BlindZoneList, Detector, MetricsReport, compute_metrics
from ..engine import Engine, ResultRow
from ..geo import GeoPixel, pixel_of
from ..model import STREAM_IRI, Status, StatusEvent, TimestampedTriple, Vocabulary, decode_event, encode_event
from ..rsp_query import ContinuousQuery, QueryError, WindowSpec, parse_query
from .config import DEFAULT_LOST_RATIO, ConfigError, ScenarioConfig
from .generator import PixelState, generator_tick, inject_incident, place_phones

__all__ = [
    "RunResult",
    "World",
    "load_query_text",
    "build_query",
    "pixel_stream_iri",
    "run_scenario",
    "ReplayResult",
    "split_events",
    "replay_log",
]

log = logging.getLogger(__name__)

_TICK, _LOSS, _DETACH = 0, 1, 2


def load_query_text(name_or_path: str, base_dir: Optional[str] = None) -> str:
    """Text of a bundled query (``detect``, ``listing1``) or of a query file."""
    bundled = resources.files("lostsilence") / "queries" / f"{name_or_path}.rsq"
    if "/" not in name_or_path and bundled.is_file():
        return bundled.read_text(encoding="utf-8")
    path = Path(name_or_path)
    if not path.is_absolute() and base_dir is not None:
        path = Path(base_dir) / path
    try:
        return path.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise ConfigError(f"engine.query: no bundled query or file named {name_or_path!r}") from None


def build_query(cfg: ScenarioConfig) -> ContinuousQuery:
    """The detection query with the scenario's window and step applied."""
    try:
        q = parse_query(load_query_text(cfg.query, cfg.base_dir))
    except QueryError as exc:
        raise ConfigError(f"engine.query: {exc}") from None
    if len(q.group_by) < 2 or not q.aggregates:
        raise ConfigError("engine.query: needs two pixel group keys and a COUNT aggregate")
    return dataclasses.replace(q, window=WindowSpec(cfg.window_range_ms, cfg.step_ms))


def pixel_stream_iri(pixel: GeoPixel, base: str = STREAM_IRI) -> str:
    return f"{base}/{pixel.lat_milli}_{pixel.lon_milli}"


@dataclass
class RunResult:
    config: ScenarioConfig
    query: ContinuousQuery
    events: list
    alerts: list
    metrics: MetricsReport
    eval_times: list
    counts: dict
    result_rows: list
    pixel_summary: dict
    incident_losses: list
    covered: Optional[set]
    stats: dict = field(default_factory=dict)

    def counter_at(self, pixel: GeoPixel, eval_time: int) -> int:
        """Engine counter for ``pixel`` at ``eval_time`` before HAVING (0 if absent)."""
        return self.counts.get(eval_time, {}).get(pixel, 0)

    def series(self, pixel: GeoPixel) -> list[tuple[int, int]]:
        return [(t, self.counter_at(pixel, t)) for t in self.eval_times]


class World:
    """Pixels, their phones and the incident schedule for one scenario."""

    def __init__(self, cfg: ScenarioConfig, rng: random.Random):
        self.cfg = cfg
        self.pixels: list[PixelState] = []
        self.by_pixel: dict[GeoPixel, PixelState] = {}
        cycle = cfg.emission_cycle_ms
        for zone in cfg.zones:
            for pixel, pop in zip(zone.pixel_list(), zone.populations()):
                state = PixelState(len(self.pixels), pixel, zone.lost_ratio)
                state.phones = place_phones(pixel, pop, rng)
                state.recompute_sleep(cycle)
                self.pixels.append(state)
                self.by_pixel[pixel] = state
        self.losses: list[tuple[int, int, object]] = []
        for i, inc in enumerate(cfg.incidents):
            state = self.by_pixel.get(inc.pixel)
            if state is None:
                # open water outside every configured zone
                state = PixelState(len(self.pixels), inc.pixel, DEFAULT_LOST_RATIO)
                self.pixels.append(state)
                self.by_pixel[inc.pixel] = state
            for t, phone in inject_incident(inc, state, rng, cycle, tag=f"x{i}_"):
                self.losses.append((t, state.index, phone))
        self.phase = [
            rng.randrange(s.sleep_ms) if s.sleep_ms is not None else None for s in self.pixels
        ]

    def emissions(self, rng: random.Random, until: int) -> Iterator[tuple[int, int, list[StatusEvent], bool]]:
        """Yield ``(t, pixel index, events, is_incident_loss)`` in emission order."""
        heap: list[tuple] = []
        seq = 0
        for state, phase in zip(self.pixels, self.phase):
            if phase is not None:
                heap.append((phase, state.index, seq, _TICK, None))
                seq += 1
        for t, idx, phone in self.losses:
            heap.append((t, idx, seq, _LOSS, phone))
            seq += 1
        heapq.heapify(heap)
        pixels = self.pixels
        detach_after = self.cfg.update_period_ms if self.cfg.emit_detached else None
        while heap:
            t, idx, _, kind, phone = heapq.heappop(heap)
            if t > until:
                return
            state = pixels[idx]
            if kind == _TICK:
                events = generator_tick(state, rng, t)
                if events and state.sleep_ms is not None:
                    heapq.heappush(heap, (t + state.sleep_ms, idx, seq, _TICK, None))
                    seq += 1
                if events:
                    yield t, idx, events, False
            elif kind == _LOSS:
                phone.lost = True
                yield t, idx, [StatusEvent(phone.phone_id, phone.lat, phone.lon, Status.UNREACHABLE, t)], True
                if detach_after is not None:
                    heapq.heappush(heap, (t + detach_after, idx, seq, _DETACH, phone))
                    seq += 1
            else:
                yield t, idx, [StatusEvent(phone.phone_id, phone.lat, phone.lon, Status.DETACHED, t)], False


class _Collector:
    """Gathers per-handle results into per-step batches for the detector."""

    def __init__(self, keys: tuple[str, str], counter: str):
        self.keys = keys
        self.counter = counter
        self.pending: dict[int, list[ResultRow]] = {}
        self.counts: dict[int, dict[GeoPixel, int]] = {}

    def sink(self, name: str, t: int, rows: list) -> None:
        self.pending.setdefault(t, []).extend(rows)

    def tap(self, name: str, t: int, rows: list) -> None:
        step = self.counts.setdefault(t, {})
        a, b = self.keys
        for r in rows:
            lat, lon = r.group.get(a), r.group.get(b)
            if lat is not None and lon is not None:
                step[GeoPixel(lat, lon)] = r[self.counter]

    def flush(self, detector: Detector, eval_times: list, result_rows: list) -> None:
        a, b = self.keys
        for t in sorted(self.pending):
            rows = sorted(self.pending.pop(t), key=lambda r: (r[a], r[b]))
            self.counts.setdefault(t, {})
            detector.on_step(t, rows)
            eval_times.append(t)
            result_rows.extend(rows)


def run_scenario(
    cfg: ScenarioConfig,
    engine: Optional[Engine] = None,
    detector: Optional[Detector] = None,
    on_event: Optional[Callable[[StatusEvent], None]] = None,
) -> RunResult:
    """Run a scenario to ``cfg.run_length_ms`` and score it.

    Same config and seed give identical events, alerts and metrics in
    either clock mode.
    """
    cfg.validate()
    wall_start = time.perf_counter()
    q = build_query(cfg)
    keys = (q.group_by[0].name, q.group_by[1].name)
    counter = q.aggregates[0].alias.name
    rng = random.Random(cfg.seed)
    world = World(cfg, rng)

    own_engine = engine is None
    engine = engine or Engine(workers=cfg.workers)
    detector = detector or Detector(BlindZoneList(cfg.blind_zones), keys=keys, counter=counter)
    collector = _Collector(keys, counter)

    if cfg.query_mode == "global":
        engine.register_query(q, collector.sink, tap=collector.tap)
        streams = [q.stream_iri] * len(world.pixels)
        covered = None
    else:
        streams = []
        for state in world.pixels:
            p = state.pixel
            iri = pixel_stream_iri(p, q.stream_iri)
            variant = dataclasses.replace(q, name=f"{q.name}_{p.lat_milli}_{p.lon_milli}", stream_iri=iri)
            engine.register_query(variant, collector.sink, tap=collector.tap)
            streams.append(iri)
        covered = {s.pixel for s in world.pixels}
    setup_seconds = time.perf_counter() - wall_start

    events: list[StatusEvent] = []
    eval_times: list[int] = []
    result_rows: list[ResultRow] = []
    incident_losses: dict[GeoPixel, int] = {}
    lost_phones: dict[GeoPixel, set] = {}
    n_triples = 0

    def deliver(t: int, idx: int, batch: list[StatusEvent], is_loss: bool) -> None:
        nonlocal n_triples
        if t - 1 > engine.now:
            engine.advance_clock(t - 1)
            collector.flush(detector, eval_times, result_rows)
        stream = streams[idx]
        for e in batch:
            triples = encode_event(e)
            engine.ingest(stream, triples)
            n_triples += len(triples)
            events.append(e)
            if e.status is Status.UNREACHABLE:
                pixel = world.pixels[idx].pixel
                lost_phones.setdefault(pixel, set()).add(e.phone_id)
                if is_loss:
                    incident_losses[pixel] = incident_losses.get(pixel, 0) + 1
            if on_event is not None:
                on_event(e)

    emissions = world.emissions(rng, cfg.run_length_ms)
    if cfg.clock == "virtual":
        for item in emissions:
            deliver(*item)
    else:
        _drive_realtime(cfg, engine, emissions, deliver, lambda: collector.flush(detector, eval_times, result_rows))
    if cfg.run_length_ms > engine.now:
        engine.advance_clock(cfg.run_length_ms)
    collector.flush(detector, eval_times, result_rows)

    monitored = list(dict.fromkeys([*cfg.monitored, *(inc.pixel for inc in cfg.incidents)]))
    series = {p: [(t, collector.counts.get(t, {}).get(p, 0)) for t in eval_times] for p in monitored}
    metrics = compute_metrics(detector.alerts, cfg.incidents, series, covered)
    handles = list(engine.handles.values())
    evaluations = sum(h.evaluations for h in handles)
    busy = sum(h.busy_seconds for h in handles)
    stats = {
        "wall_seconds": time.perf_counter() - wall_start,
        "setup_seconds": setup_seconds,
        "pixels": len(world.pixels),
        "phones": sum(len(s.phones) for s in world.pixels),
        "events": len(events),
        "triples": n_triples,
        "queries": len(handles),
        "evaluations": evaluations,
        "mean_eval_ms": 1000 * busy / evaluations if evaluations else 0.0,
        "max_eval_ms": 1000 * max((h.max_eval_seconds for h in handles), default=0.0),
    }
    if own_engine:
        engine.close()
    log.info("run %s: %s", cfg.name, stats)
    return RunResult(
        config=cfg,
        query=q,
        events=events,
        alerts=list(detector.alerts),
        metrics=metrics,
        eval_times=eval_times,
        counts=collector.counts,
        result_rows=result_rows,
        pixel_summary={p: len(s) for p, s in sorted(lost_phones.items())},
        incident_losses=[incident_losses.get(inc.pixel, 0) for inc in cfg.incidents],
        covered=covered,
        stats=stats,
    )


_END = object()


def _drive_realtime(cfg, engine, emissions, deliver, flush) -> None:
    """Pace emissions against the wall clock on a producer thread.

    The producer posts heartbeats while it sleeps, telling the consumer that
    no event earlier than the heartbeat is still to come; the consumer only
    advances the engine clock up to such a promise.
    """
    speed = cfg.realtime_speed
    q: queue.Queue = queue.Queue(maxsize=4096)
    errors: list[BaseException] = []
    origin = time.monotonic()

    def virtual_now() -> int:
        return int((time.monotonic() - origin) * 1000 * speed)

    def produce() -> None:
        try:
            for item in emissions:
                t = item[0]
                while True:
                    now = virtual_now()
                    if now >= t:
                        break
                    q.put(("beat", min(now, t - 1)))
                    time.sleep(max(0.0, min((t - now) / 1000 / speed, cfg.step_ms / 1000 / speed)))
                q.put(("emit", item))
            end = cfg.run_length_ms
            while virtual_now() < end:
                q.put(("beat", virtual_now()))
                time.sleep(max(0.0, min((end - virtual_now()) / 1000 / speed, cfg.step_ms / 1000 / speed)))
        except BaseException as exc:  # surfaced on the consumer side
            errors.append(exc)
        finally:
            q.put(("end", _END))

    producer = threading.Thread(target=produce, name="stream-generator", daemon=True)
    producer.start()
    while True:
        kind, payload = q.get()
        if kind == "end":
            break
        if kind == "beat":
            if payload > engine.now:
                engine.advance_clock(payload)
                flush()
        else:
            deliver(*payload)
    producer.join()
    if errors:
        raise errors[0]


@dataclass
class ReplayResult:
    alerts: list
    eval_times: list
    counts: dict
    result_rows: list
    events: int


def split_events(triples) -> Iterator[list[TimestampedTriple]]:
    """Group a recorded stream into per-event triple lists (closed by hasStatus)."""
    pending: list[TimestampedTriple] = []
    for t in triples:
        pending.append(t)
        if t.predicate == Vocabulary.HAS_STATUS:
            yield pending
            pending = []
    if pending:
        decode_event(pending)  # raises with the missing predicate


def replay_log(
    groups,
    q: ContinuousQuery,
    blind_zones: Optional[BlindZoneList] = None,
    until: Optional[int] = None,
    query_mode: str = "global",
    workers: int = 1,
) -> ReplayResult:
    """Feed recorded event groups through a fresh engine and detector.

    Ingestion and clock advances follow :func:`run_scenario` exactly, so a
    run's own log with its own query reproduces its alert log.  In per-pixel
    mode each event is routed to the stream of the pixel its coordinates
    bin to.
    """
    if query_mode not in ("global", "per-pixel"):
        raise ValueError(f"query_mode must be 'global' or 'per-pixel', got {query_mode!r}")
    groups = list(groups)
    keys = (q.group_by[0].name, q.group_by[1].name)
    counter = q.aggregates[0].alias.name
    detector = Detector(blind_zones or BlindZoneList(), keys=keys, counter=counter)
    collector = _Collector(keys, counter)
    eval_times: list[int] = []
    result_rows: list[ResultRow] = []
    with Engine(workers=workers) as engine:
        if query_mode == "global":
            engine.register_query(q, collector.sink, tap=collector.tap)
            streams = [q.stream_iri] * len(groups)
        else:
            streams = []
            seen: set = set()
            for g in groups:
                e = decode_event(g)
                p = pixel_of(e.lat, e.lon)
                iri = pixel_stream_iri(p, q.stream_iri)
                streams.append(iri)
                if p not in seen:
                    seen.add(p)
                    variant = dataclasses.replace(q, name=f"{q.name}_{p.lat_milli}_{p.lon_milli}", stream_iri=iri)
                    engine.register_query(variant, collector.sink, tap=collector.tap)
        for g, stream in zip(groups, streams):
            t = g[-1].timestamp
            if t - 1 > engine.now:
                engine.advance_clock(t - 1)
                collector.flush(detector, eval_times, result_rows)
            engine.ingest(stream, g)
        end = until if until is not None else engine.now
        if end > engine.now:
            engine.advance_clock(end)
        collector.flush(detector, eval_times, result_rows)
    return ReplayResult(list(detector.alerts), eval_times, collector.counts, result_rows, len(groups))
