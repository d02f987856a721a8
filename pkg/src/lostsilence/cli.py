"""Command-line entry point: ``run``, ``replay``, ``parse-query`` and ``report``.

Exit codes: 0 success, 2 configuration or query error, 3 runtime error.
Anything that depends on the wall clock goes to ``manifest.json`` only, so
every other artifact and all printed output is reproducible.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import re
import sys
import time
from pathlib import Path
from typing import Optional, Sequence

from . import __version__
from .detector import BlindZoneList, MetricsReport, read_alert_log, read_blind_zones, write_alert_log, write_blind_zones
from .engine import EngineError, write_result_log
from .geo import GeoError, GeoPixel
from .model import ModelError, encode_event, read_ntriples, write_ntriples
from .rsp_query import QueryError, QueryValidationError, format_query, parse_query, validate
from .simulator import (
    ConfigError,
    load_config,
    parse_duration,
    replay_log,
    run_scenario,
    split_events,
)

log = logging.getLogger("lostsilence")

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 2, 3

ARTIFACTS = {
    "events": "events.nt",
    "alerts": "alerts.jsonl",
    "results": "results.csv",
    "series": "series.csv",
    "pixel_summary": "pixel_summary.csv",
    "metrics": "metrics.json",
    "query": "query.rsq",
    "blind_zones": "blind_zones.csv",
}
MANIFEST = "manifest.json"
_END_MARK = re.compile(r"#\s*end\s+t=(\d+)\s*$")


def _fail(message: str, code: int) -> int:
    print(f"lostsilence: error: {message}", file=sys.stderr)
    return code


# --- run -------------------------------------------------------------------


def _duration_arg(what: str):
    def parse(text: str) -> int:
        try:
            return parse_duration(text, what)
        except ConfigError as exc:
            raise argparse.ArgumentTypeError(str(exc)) from None
    return parse


def _write_events(path: Path, events, run_length: int) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for e in events:
            write_ntriples(encode_event(e), fh)
        fh.write(f"# end t={run_length}\n")


def _write_series(path: Path, result) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["lat_milli", "lon_milli", "eval_time_ms", "counter"])
        for pixel, points in sorted(result.metrics.series.items()):
            for t, c in points:
                w.writerow([pixel.lat_milli, pixel.lon_milli, t, c])


def _write_pixel_summary(path: Path, summary: dict) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["lat_milli", "lon_milli", "total_lost"])
        for pixel, n in sorted(summary.items()):
            w.writerow([pixel.lat_milli, pixel.lon_milli, n])


def cmd_run(args: argparse.Namespace) -> int:
    try:
        cfg = load_config(args.config)
        overrides = {
            "seed": args.seed,
            "step_ms": args.step,
            "window_ms": args.window,
            "clock": args.clock,
            "query_mode": args.query_mode,
            "coords": args.coords,
            "run_length_ms": args.run_length,
            "workers": args.workers,
            "realtime_speed": args.speed,
        }
        cfg = cfg.replace(**{k: v for k, v in overrides.items() if v is not None})
        cfg.validate()
    except (ConfigError, GeoError) as exc:
        return _fail(str(exc), EXIT_CONFIG)

    out = Path(args.out) if args.out else Path("runs") / cfg.name
    try:
        out.mkdir(parents=True, exist_ok=True)
        started = time.time()
        result = run_scenario(cfg)
    except (ConfigError, GeoError) as exc:
        return _fail(str(exc), EXIT_CONFIG)
    except (EngineError, ModelError, OSError, RuntimeError) as exc:
        return _fail(f"run failed: {exc}", EXIT_RUNTIME)

    paths = {k: out / v for k, v in ARTIFACTS.items()}
    keys = (result.query.group_by[0].name, result.query.group_by[1].name)
    counter = result.query.aggregates[0].alias.name
    try:
        _write_events(paths["events"], result.events, cfg.run_length_ms)
        with open(paths["alerts"], "w", encoding="utf-8") as fh:
            write_alert_log(result.alerts, fh)
        with open(paths["results"], "w", encoding="utf-8") as fh:
            write_result_log(result.result_rows, fh, keys, counter)
        _write_series(paths["series"], result)
        _write_pixel_summary(paths["pixel_summary"], result.pixel_summary)
        paths["metrics"].write_text(result.metrics.to_json(), encoding="utf-8")
        paths["query"].write_text(format_query(result.query), encoding="utf-8")
        with open(paths["blind_zones"], "w", encoding="utf-8") as fh:
            write_blind_zones(BlindZoneList(cfg.blind_zones), fh)
        manifest = {
            "version": __version__,
            "config": str(Path(args.config)),
            "name": cfg.name,
            "out": str(out),
            "seed": cfg.seed,
            "clock": cfg.clock,
            "query_mode": cfg.query_mode,
            "coords": cfg.coords,
            "step_ms": cfg.step_ms,
            "window_ms": cfg.window_range_ms,
            "run_length_ms": cfg.run_length_ms,
            "incidents": [
                {
                    "name": inc.name,
                    "pixel": list(inc.pixel),
                    "phones": inc.phone_count,
                    "start_ms": inc.start_time,
                    "duration_ms": inc.duration,
                }
                for inc in cfg.incidents
            ],
            "artifacts": {k: v.name for k, v in paths.items()},
            "started_at": started,
            "stats": result.stats,
        }
        (out / MANIFEST).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    except OSError as exc:
        return _fail(f"cannot write artifacts: {exc}", EXIT_RUNTIME)

    sys.stdout.write(result.metrics.summary())
    print(f"artifacts written to {out}")
    return EXIT_OK


# --- replay ----------------------------------------------------------------


def _read_event_log(path: Path) -> tuple[list, Optional[int]]:
    """Event groups and the ``# end t=`` marker (None if absent)."""
    end = None
    lines = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            m = _END_MARK.match(line.strip())
            if m:
                end = int(m.group(1))
                lines.append("\n")  # keep line numbers aligned
            else:
                lines.append(line)
    return list(split_events(read_ntriples(lines))), end


def cmd_replay(args: argparse.Namespace) -> int:
    run_dir = Path(args.run) if args.run else None
    manifest: dict = {}
    if run_dir is not None:
        try:
            manifest = json.loads((run_dir / MANIFEST).read_text(encoding="utf-8"))
        except (OSError, ValueError) as exc:
            return _fail(f"cannot read manifest in {run_dir}: {exc}", EXIT_RUNTIME)

    def pick(value, artifact):
        if value is not None:
            return Path(value)
        if run_dir is not None:
            return run_dir / manifest["artifacts"][artifact]
        return None

    events_path = pick(args.events, "events")
    query_path = pick(args.query, "query")
    bz_path = pick(args.blind_zones, "blind_zones")
    if events_path is None or query_path is None:
        return _fail("replay needs an event log and a query (or --run DIR)", EXIT_CONFIG)
    mode = args.query_mode or manifest.get("query_mode", "global")

    try:
        q = parse_query(query_path.read_bytes())
    except OSError as exc:
        return _fail(f"cannot read query: {exc}", EXIT_RUNTIME)
    except QueryError as exc:
        return _fail(f"{query_path}:{exc.line}:{exc.col}: {exc.kind} error: {exc.message}", EXIT_CONFIG)
    if len(q.group_by) < 2 or not q.aggregates:
        return _fail(f"{query_path}: query needs two pixel group keys and a COUNT aggregate", EXIT_CONFIG)
    try:
        bz = BlindZoneList()
        if bz_path is not None:
            with open(bz_path, encoding="utf-8") as fh:
                bz = read_blind_zones(fh)
    except OSError as exc:
        return _fail(f"cannot read blind zones: {exc}", EXIT_RUNTIME)
    except ValueError as exc:
        return _fail(f"{bz_path}: {exc}", EXIT_CONFIG)

    try:
        groups, end = _read_event_log(events_path)
        until = args.until if args.until is not None else end
        result = replay_log(groups, q, bz, until=until, query_mode=mode)
    except OSError as exc:
        return _fail(f"cannot read event log: {exc}", EXIT_RUNTIME)
    except (ModelError, EngineError, GeoError) as exc:
        return _fail(f"{events_path}: {exc}", EXIT_RUNTIME)

    if args.out:
        try:
            with open(args.out, "w", encoding="utf-8") as fh:
                write_alert_log(result.alerts, fh)
        except OSError as exc:
            return _fail(f"cannot write alert log: {exc}", EXIT_RUNTIME)
        print(f"{len(result.alerts)} alerts ({sum(a.first_detection for a in result.alerts)} first detections) "
              f"from {result.events} events; written to {args.out}")
    else:
        write_alert_log(result.alerts, sys.stdout)
    return EXIT_OK


# --- parse-query -----------------------------------------------------------


def cmd_parse_query(args: argparse.Namespace) -> int:
    path = Path(args.path)
    try:
        data = path.read_bytes()
    except OSError as exc:
        return _fail(f"cannot read {path}: {exc}", EXIT_RUNTIME)
    try:
        q = parse_query(data)
    except QueryValidationError as exc:
        for d in exc.diagnostics:
            print(f"{path}: {d}", file=sys.stderr)
        return EXIT_CONFIG
    except QueryError as exc:
        print(f"{path}:{exc.line}:{exc.col}: {exc.kind} error: {exc.message}", file=sys.stderr)
        return EXIT_CONFIG
    if args.warnings:
        for d in validate(q, warnings=True):
            print(f"{path}: {d}", file=sys.stderr)
    sys.stdout.write(format_query(q))
    return EXIT_OK


# --- report ----------------------------------------------------------------


def _read_series(path: Path) -> dict[GeoPixel, list[tuple[int, int]]]:
    series: dict[GeoPixel, list[tuple[int, int]]] = {}
    with open(path, encoding="utf-8", newline="") as fh:
        for row in csv.DictReader(fh):
            p = GeoPixel(int(row["lat_milli"]), int(row["lon_milli"]))
            series.setdefault(p, []).append((int(row["eval_time_ms"]), int(row["counter"])))
    return series


def write_wide_series(series: dict, out) -> None:
    """One row per step, one column per pixel: plot-ready."""
    pixels = sorted(series)
    times = sorted({t for pts in series.values() for t, _ in pts})
    lookup = {p: dict(series[p]) for p in pixels}
    w = csv.writer(out, lineterminator="\n")
    w.writerow(["eval_time_ms", *(f"{p.lat_milli}_{p.lon_milli}" for p in pixels)])
    for t in times:
        w.writerow([t, *(lookup[p].get(t, 0) for p in pixels)])


def cmd_report(args: argparse.Namespace) -> int:
    run_dir = Path(args.run_dir)
    needed = [run_dir / ARTIFACTS[k] for k in ("metrics", "alerts", "series")]
    missing = [p.name for p in needed if not p.is_file()]
    if missing:
        return _fail(f"{run_dir}: missing artifacts: {', '.join(missing)}", EXIT_RUNTIME)
    try:
        metrics = MetricsReport.from_dict(json.loads(needed[0].read_text(encoding="utf-8")))
        with open(needed[1], encoding="utf-8") as fh:
            alerts = read_alert_log(fh)
        series = _read_series(needed[2])
    except (OSError, ValueError, KeyError) as exc:
        return _fail(f"{run_dir}: unreadable artifact: {exc}", EXIT_RUNTIME)

    sys.stdout.write(metrics.summary())
    for pixel, pts in sorted(series.items()):
        peak = max((c for _, c in pts), default=0)
        print(f"series {pixel.lat_milli},{pixel.lon_milli}: {len(pts)} steps, peak {peak}")
    if len(alerts) != metrics.total_alerts:
        print(f"warning: alert log has {len(alerts)} records, metrics expect {metrics.total_alerts}",
              file=sys.stderr)
    target = Path(args.series_out) if args.series_out else run_dir / "series_wide.csv"
    try:
        with open(target, "w", encoding="utf-8", newline="") as fh:
            write_wide_series(series, fh)
    except OSError as exc:
        return _fail(f"cannot write {target}: {exc}", EXIT_RUNTIME)
    print(f"per-step series written to {target}")
    return EXIT_OK


# --- entry -----------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="lostsilence", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="simulate a scenario and detect incidents")
    r.add_argument("--config", required=True, help="scenario TOML file or bundled preset name")
    r.add_argument("--out", help="output directory (default runs/<scenario name>)")
    r.add_argument("--seed", type=int)
    r.add_argument("--step", type=_duration_arg("--step"), help="query step, e.g. 5s")
    r.add_argument("--window", type=_duration_arg("--window"), help="window range, e.g. 30m")
    r.add_argument("--run-length", type=_duration_arg("--run-length"))
    r.add_argument("--clock", choices=("virtual", "realtime"))
    r.add_argument("--speed", type=float, help="simulated ms per wall ms in realtime mode")
    r.add_argument("--query-mode", choices=("per-pixel", "global"))
    r.add_argument("--coords", choices=("strict", "permissive"))
    r.add_argument("--workers", type=int)
    r.set_defaults(func=cmd_run)

    rp = sub.add_parser("replay", help="re-run detection over a recorded event log")
    rp.add_argument("events", nargs="?", help="N-Triples event log")
    rp.add_argument("--run", help="run directory; supplies any input not given explicitly")
    rp.add_argument("--query", help="query file")
    rp.add_argument("--blind-zones", help="blind-zone file (lat_milli,lon_milli lines)")
    rp.add_argument("--until", type=_duration_arg("--until"), help="advance the clock to this time")
    rp.add_argument("--query-mode", choices=("per-pixel", "global"))
    rp.add_argument("--out", help="alert log to write (default: standard output)")
    rp.set_defaults(func=cmd_replay)

    pq = sub.add_parser("parse-query", help="print a query in canonical form")
    pq.add_argument("path")
    pq.add_argument("--warnings", action="store_true", help="also report warning diagnostics")
    pq.set_defaults(func=cmd_parse_query)

    rep = sub.add_parser("report", help="summarise a run directory")
    rep.add_argument("run_dir")
    rep.add_argument("--series-out", help="wide per-step CSV (default <run_dir>/series_wide.csv)")
    rep.set_defaults(func=cmd_report)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
