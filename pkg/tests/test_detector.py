import io
import json

import pytest
from hypothesis import given
from hypothesis import strategies as st

from lostsilence.detector import (
    Alert,
    BlindZoneList,
    Detector,
    IncidentReport,
    MetricsReport,
    classify_alerts,
    compute_metrics,
    filter_blind_zones,
    read_alert_log,
    read_blind_zones,
    write_alert_log,
    write_blind_zones,
)
from lostsilence.engine import ResultRow
from lostsilence.geo import GeoPixel
from lostsilence.simulator import IncidentConfig

SHIP = GeoPixel(329863, 246792)


def row(t, lat, lon, counter):
    return ResultRow(t, {"roundLat": lat, "roundLong": lon}, {"counter": counter})


def test_blind_zone_set_semantics():
    bz = BlindZoneList([(1, 2), (1, 2), (3, 4)])
    assert len(bz) == 2
    assert GeoPixel(1, 2) in bz and (3, 4) in bz
    assert GeoPixel(9, 9) not in bz


def test_filter_removes_blind_rows_in_order():
    rows = [row(5, 1, 1, 20), row(5, 2, 2, 30), row(5, 3, 3, 40)]
    kept = filter_blind_zones(rows, BlindZoneList([(2, 2)]))
    assert [r["counter"] for r in kept] == [20, 40]
    assert filter_blind_zones(rows, BlindZoneList()) == rows


def test_blind_zone_file_round_trip():
    text = "# known dead spots\n329863,246792\n\n 1 , -2  # comment\n"
    bz = read_blind_zones(io.StringIO(text))
    assert bz == BlindZoneList([(329863, 246792), (1, -2)])
    out = io.StringIO()
    write_blind_zones(bz, out)
    assert read_blind_zones(io.StringIO(out.getvalue())) == bz
    with pytest.raises(ValueError, match="line 2"):
        read_blind_zones(["1,2", "1;2"])


def test_first_detection_transitions():
    state = {}
    a1 = classify_alerts([row(5, 1, 1, 11)], state)
    a2 = classify_alerts([row(10, 1, 1, 12)], state)
    classify_alerts([], state)
    a4 = classify_alerts([row(20, 1, 1, 11)], state)
    assert [a.first_detection for a in a1 + a2 + a4] == [True, False, True]
    assert a1[0] == Alert(GeoPixel(1, 1), 11, 5, True)


def test_detector_suppresses_blind_pixels_and_orders():
    det = Detector(BlindZoneList([SHIP]))
    det.on_step(5_000, [row(5_000, 2, 2, 30), row(5_000, *SHIP, 424), row(5_000, 1, 1, 20)])
    assert [a.pixel for a in det.alerts] == [GeoPixel(1, 1), GeoPixel(2, 2)]
    with pytest.raises(ValueError):
        det.on_step(5_000, [])


@given(st.lists(st.lists(st.tuples(st.integers(0, 3), st.integers(11, 50)), max_size=4), max_size=30))
def test_no_blind_alerts_and_firsts_are_separated(steps):
    blind = BlindZoneList([(0, 0)])
    det = Detector(blind)
    for k, step in enumerate(steps, start=1):
        t = k * 5_000
        det.on_step(t, [row(t, p, p, c) for p, c in dict(step).items()])
    assert all(a.pixel not in blind for a in det.alerts)
    times_above = {}
    for a in det.alerts:
        times_above.setdefault(a.pixel, []).append((a.eval_time, a.first_detection))
    for seq in times_above.values():
        for (t0, _), (t1, first) in zip(seq, seq[1:]):
            # a new first detection needs a gap of at least one step below threshold
            assert first == (t1 - t0 > 5_000)


def test_alert_log_round_trip():
    alerts = [Alert(SHIP, 424, 305_000, True), Alert(SHIP, 424, 310_000, False)]
    out = io.StringIO()
    write_alert_log(alerts, out)
    first = json.loads(out.getvalue().splitlines()[0])
    assert first == {"alert_time_ms": 305_000, "lat_milli": 329863, "lon_milli": 246792,
                     "counter": 424, "first_detection": True}
    assert read_alert_log(io.StringIO(out.getvalue())) == alerts


def test_metrics_latency_and_false_alarms():
    inc = IncidentConfig(SHIP, 424, 301_234)
    alerts = [
        Alert(GeoPixel(1, 1), 12, 100_000, True),
        Alert(SHIP, 424, 305_000, True),
        Alert(SHIP, 424, 310_000, False),
    ]
    m = compute_metrics(alerts, [inc], {SHIP: [(300_000, 0), (305_000, 424)]})
    (r,) = m.incidents
    assert r.detected and r.detection_latency_ms == 3_766 and r.peak_counter == 424
    assert m.fail_to_report == 0
    assert m.false_alarm == 1 and m.false_alarm_pixels == [GeoPixel(1, 1)]
    assert m.series[SHIP][-1] == (305_000, 424)


def test_metrics_fail_to_report_and_pre_incident_alerts():
    inc = IncidentConfig(SHIP, 424, 301_234)
    early = [Alert(SHIP, 30, 100_000, True)]  # before the incident: not a detection
    m = compute_metrics(early, [inc])
    assert m.fail_to_report == 1 and not m.incidents[0].detected
    assert m.incidents[0].detection_latency_ms is None


def test_metrics_coverage_gap():
    inc = IncidentConfig(SHIP, 424, 0)
    m = compute_metrics([], [inc], covered={GeoPixel(0, 0)})
    assert m.diagnostics and m.diagnostics[0].startswith("COVERAGE_GAP")
    assert compute_metrics([], [inc], covered={SHIP}).diagnostics == []


def test_metrics_report_serialisation():
    m = compute_metrics([Alert(SHIP, 424, 305_000, True)], [IncidentConfig(SHIP, 424, 301_234)],
                        {SHIP: [(305_000, 424)]})
    back = MetricsReport.from_dict(json.loads(json.dumps(m.to_dict(include_series=True))))
    assert back == m
    assert "detected after 3766 ms (peak 424)" in m.summary()
    assert IncidentReport.from_dict(m.incidents[0].to_dict()) == m.incidents[0]
