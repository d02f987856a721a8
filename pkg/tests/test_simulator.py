import dataclasses
import random
import statistics

import pytest

from lostsilence.detector import write_alert_log
from lostsilence.geo import GeoPixel, pixel_of
from lostsilence.model import Status
from lostsilence.simulator import (
    ConfigError,
    IncidentConfig,
    PixelState,
    World,
    ZoneConfig,
    config_from_dict,
    generator_tick,
    inject_incident,
    list_presets,
    load_config,
    loss_times,
    parse_duration,
    place_phones,
    run_scenario,
    sleep_time_for_density,
)

SHIP = GeoPixel(329863, 246792)


def small(**over):
    data = {
        "name": "small",
        "seed": 3,
        "run_length": "3m",
        "update_period": "30m",
        "cycle": "1m",
        "monitor": [[329863, 246792]],
        "engine": {"step": "5s"},
        "zones": [
            {"name": "town", "pixels": 6, "density": 21, "origin": [329900, 246000], "columns": 3},
            {"name": "rural", "pixels": 8, "density": 6, "origin": [330000, 246000], "columns": 4},
            {"name": "water", "pixels": 4, "density": 0, "origin": [329863, 246790], "columns": 4},
        ],
        "incidents": [{"name": "ship", "pixel": [329863, 246792], "phones": 40, "start": 61_234}],
    }
    for k, v in over.items():
        if k == "engine":
            data["engine"] = {**data["engine"], **v}
        else:
            data[k] = v
    return config_from_dict(data)


def alert_text(result):
    import io
    out = io.StringIO()
    write_alert_log(result.alerts, out)
    return out.getvalue()


@pytest.mark.parametrize("density,cycle,expected", [(6, 5000, 833), (21, 5000, 238), (1, 5000, 5000)])
def test_sleep_time(density, cycle, expected):
    assert sleep_time_for_density(density, cycle) == expected


def test_sleep_time_empty_pixel_and_errors():
    assert sleep_time_for_density(0, 5000) is None
    with pytest.raises(ValueError):
        sleep_time_for_density(3, 0)


def _state(n, lost_ratio, seed=0):
    rng = random.Random(seed)
    s = PixelState(0, SHIP, lost_ratio)
    s.phones = place_phones(SHIP, n, rng)
    return s, rng


@pytest.mark.parametrize("ratio,status", [(1.0, Status.UNREACHABLE), (0.0, Status.ATTACHED)])
def test_tick_extreme_ratios(ratio, status):
    s, rng = _state(5, ratio)
    evs = [e for t in range(50) for e in generator_tick(s, rng, t)]
    assert len(evs) == 50 and {e.status for e in evs} == {status}


def test_tick_lost_fraction():
    s, rng = _state(7, 0.1, seed=11)
    evs = [generator_tick(s, rng, t)[0] for t in range(10_000)]
    frac = sum(e.status is Status.UNREACHABLE for e in evs) / len(evs)
    assert abs(frac - 0.1) <= 0.01


def test_tick_round_robin_skips_powered_off():
    s, rng = _state(4, 0.0)
    s.phones[1].lost = True
    ids = [generator_tick(s, rng, t)[0].phone_id for t in range(6)]
    p = [ph.phone_id for ph in s.phones]
    assert ids == [p[0], p[2], p[3], p[0], p[2], p[3]]
    for ph in s.phones:
        ph.lost = True
    assert generator_tick(s, rng, 99) == []


def test_phones_stay_inside_their_pixel():
    rng = random.Random(5)
    for pixel in (SHIP, GeoPixel(-1, -1), GeoPixel(0, 179999)):
        for ph in place_phones(pixel, 300, rng):
            assert pixel_of(ph.lat, ph.lon) == pixel


def test_loss_times():
    assert loss_times(IncidentConfig(SHIP, 424, 1_000)) == [1_000] * 424
    assert loss_times(IncidentConfig(SHIP, 1, 7)) == [7]
    times = loss_times(IncidentConfig(SHIP, 300, 0, 180_000))
    assert times[0] == 0 and times[-1] == 180_000 and times == sorted(times)
    slope = statistics.linear_regression(times, range(300)).slope * 60_000
    assert slope == pytest.approx(100, rel=0.01)


def test_inject_grows_population():
    s, rng = _state(0, 0.0)
    sched = inject_incident(IncidentConfig(SHIP, 424, 5), s, rng, 1_800_000)
    assert len(s.phones) == 424 and len(sched) == 424
    assert s.sleep_ms == 1_800_000 // 424


def test_jianli_preset_totals():
    cfg = load_config("eastern_star")
    assert [len(z.pixel_list()) for z in cfg.zones] == [7024, 20991, 1200]
    assert [z.density for z in cfg.zones] == [21, 6, 0]
    assert cfg.total_pixels() == 29_215
    assert cfg.total_phones() == 7024 * 21 + 20991 * 6
    assert cfg.window_range_ms == cfg.update_period_ms == 1_800_000
    assert SHIP in set(cfg.zones[2].pixel_list())
    pop = load_config("eastern_star_population")
    assert pop.total_phones() == 285_902
    ci = load_config("eastern_star_ci")
    assert [z.density for z in ci.zones] == [21, 6, 0]
    assert [len(z.pixel_list()) for z in ci.zones] == [702, 2099, 120]
    assert SHIP in set(ci.zones[2].pixel_list())


def test_all_presets_load():
    names = list_presets()
    assert {"eastern_star", "eastern_star_step20", "eastern_star_step30", "pressure", "background_ci"} <= set(names)
    for n in names:
        load_config(n)


def test_duration_parsing():
    assert parse_duration("30m") == 1_800_000
    assert parse_duration("5s") == 5_000
    assert parse_duration(250) == 250
    with pytest.raises(ConfigError):
        parse_duration("5 parsecs")


def test_config_errors_name_the_field():
    with pytest.raises(ConfigError, match="engine.foo"):
        small(engine={"foo": 1})
    with pytest.raises(ConfigError, match=r"zones\[1\].density"):
        config_from_dict({"zones": [{"name": "a"}, {"name": "b", "density": -1}]})
    with pytest.raises(ConfigError, match=r"incidents\[0\].phones"):
        small(incidents=[{"pixel": [1, 1], "phones": 0, "start": 0}])
    with pytest.raises(ConfigError, match="already in zone"):
        config_from_dict({"zones": [{"name": "a", "pixels": 2}, {"name": "b", "pixels": 1}]})
    with pytest.raises(ConfigError, match="engine.window"):
        small(engine={"window": "1s"})
    with pytest.raises(ConfigError, match="strict"):
        small(engine={"coords": "strict"})


def test_world_layout():
    cfg = small()
    world = World(cfg, random.Random(cfg.seed))
    assert len(world.pixels) == 18
    ship = world.by_pixel[SHIP]
    assert len(ship.phones) == 40
    assert len(world.losses) == 40


def test_incident_in_open_water_outside_zones():
    cfg = small(incidents=[{"pixel": [1, 1], "phones": 12, "start": 6_000}])
    r = run_scenario(cfg)
    assert r.incident_losses == [12]
    assert r.metrics.incidents[0].detected


def test_small_run_detects_and_conserves():
    cfg = small()
    r = run_scenario(cfg)
    assert r.metrics.fail_to_report == 0
    assert r.metrics.false_alarm == 0
    assert r.incident_losses == [40]
    ship_ids = {p.phone_id for p in World(cfg, random.Random(cfg.seed)).by_pixel[SHIP].phones}
    after = [e for e in r.events if e.phone_id in ship_ids and e.timestamp >= 61_234]
    # each phone loses signal once and then only the Detached transition can follow
    assert sum(e.status is Status.UNREACHABLE for e in after) == 40
    assert all(e.status is not Status.ATTACHED for e in after)
    assert r.series(SHIP)[-1][1] == 40
    assert r.eval_times == list(range(5_000, 180_001, 5_000))


def test_determinism_same_seed():
    a, b = run_scenario(small()), run_scenario(small())
    assert a.events == b.events
    assert alert_text(a) == alert_text(b)
    assert a.metrics.to_json() == b.metrics.to_json()
    c = run_scenario(small(seed=4))
    assert c.events != a.events


def test_per_pixel_and_global_modes_agree():
    a = run_scenario(small())
    b = run_scenario(small(engine={"query_mode": "global"}))
    assert a.events == b.events
    assert alert_text(a) == alert_text(b)
    assert a.counts == b.counts


def test_workers_do_not_change_results():
    a = run_scenario(small())
    b = run_scenario(small(engine={"workers": 3}))
    assert alert_text(a) == alert_text(b)


def test_realtime_matches_virtual():
    cfg = small(run_length="40s", incidents=[{"pixel": [329863, 246792], "phones": 15, "start": 20_000}])
    v = run_scenario(cfg)
    rt = run_scenario(dataclasses.replace(cfg, clock="realtime", realtime_speed=20.0))
    assert rt.events == v.events
    assert alert_text(rt) == alert_text(v)
    assert rt.stats["wall_seconds"] >= 40 / 20 * 0.9


def test_step_sweep_spacing():
    for step in (5_000, 20_000, 30_000):
        r = run_scenario(small(engine={"step": step}))
        assert all(b - a == step for a, b in zip(r.eval_times, r.eval_times[1:]))
        assert r.series(SHIP)[-1][1] == 40


def test_background_only_is_quiet():
    cfg = small(incidents=[], run_length="35m")
    r = run_scenario(cfg)
    assert r.alerts == []
    assert max(max(step.values(), default=0) for step in r.counts.values()) <= 10


def test_background_expected_lost_count_is_small():
    # density 21 pixels report 21 times per cycle; with the default ratio the
    # expected distinct lost phones per 30-minute window stays far below 10
    cfg = load_config("eastern_star")
    town = cfg.zones[0]
    per_window = town.density * (cfg.window_range_ms / cfg.emission_cycle_ms) * town.lost_ratio
    assert per_window <= 2


def test_zone_populations():
    z = ZoneConfig("z", pixel_count=4, phones=10)
    assert z.populations() == [3, 3, 2, 2]
    assert ZoneConfig("d", pixel_count=3, density=6).total_phones() == 18
