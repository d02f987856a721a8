import json
from pathlib import Path

import pytest

from lostsilence.cli import main

GOLDEN = Path(__file__).parent / "golden"

SMALL = """
name = "cli-small"
seed = 5
run_length = "2m"
cycle = "1m"
monitor = [[329863, 246792]]

[engine]
step = "5s"

[[zones]]
name = "town"
pixels = 6
density = 21
origin = [329900, 246000]
columns = 3

[[zones]]
name = "water"
pixels = 4
density = 0
origin = [329863, 246790]
columns = 4

[[incidents]]
name = "ship"
pixel = [329863, 246792]
phones = 30
start = 41234
"""


@pytest.fixture
def config(tmp_path):
    p = tmp_path / "small.toml"
    p.write_text(SMALL)
    return p


@pytest.fixture
def run_dir(tmp_path, config):
    out = tmp_path / "run"
    assert main(["run", "--config", str(config), "--out", str(out)]) == 0
    return out


def test_run_writes_artifacts(run_dir, capsys):
    names = {p.name for p in run_dir.iterdir()}
    assert {"events.nt", "alerts.jsonl", "results.csv", "series.csv", "pixel_summary.csv",
            "metrics.json", "manifest.json", "query.rsq", "blind_zones.csv"} <= names
    metrics = json.loads((run_dir / "metrics.json").read_text())
    assert metrics["fail_to_report"] == 0
    assert metrics["incidents"][0]["detected"] is True
    manifest = json.loads((run_dir / "manifest.json").read_text())
    assert manifest["seed"] == 5 and manifest["query_mode"] == "per-pixel"
    assert manifest["clock"] == "virtual" and manifest["coords"] == "permissive"
    assert (run_dir / "events.nt").read_text().endswith("# end t=120000\n")
    assert (run_dir / "results.csv").read_text().startswith("eval_time_ms,roundLat,roundLong,counter\n")
    assert "329863,246792,30" in (run_dir / "pixel_summary.csv").read_text()


def test_run_output_is_deterministic(tmp_path, config, capsys):
    outs = []
    for k in range(2):
        d = tmp_path / f"r{k}"
        assert main(["run", "--config", str(config), "--out", str(d)]) == 0
        outs.append(capsys.readouterr().out.replace(str(d), "DIR"))
    assert outs[0] == outs[1]
    for name in ("events.nt", "alerts.jsonl", "metrics.json", "results.csv", "series.csv"):
        assert (tmp_path / "r0" / name).read_bytes() == (tmp_path / "r1" / name).read_bytes()


def test_run_step_override(tmp_path, config):
    out = tmp_path / "s20"
    assert main(["run", "--config", str(config), "--out", str(out), "--step", "20s"]) == 0
    times = sorted({int(l.split(",")[2]) for l in (out / "series.csv").read_text().splitlines()[1:]})
    assert times == list(range(20_000, 120_001, 20_000))
    assert "STEP 20s" in (out / "query.rsq").read_text()


def test_run_unknown_key_exits_2(tmp_path, capsys):
    p = tmp_path / "bad.toml"
    p.write_text(SMALL.replace('step = "5s"', 'step = "5s"\nfoo = 1'))
    assert main(["run", "--config", str(p), "--out", str(tmp_path / "x")]) == 2
    assert "engine.foo" in capsys.readouterr().err


def test_run_strict_coordinates_exit_2(tmp_path, config, capsys):
    assert main(["run", "--config", str(config), "--out", str(tmp_path / "x"), "--coords", "strict"]) == 2
    assert "strict" in capsys.readouterr().err


def test_run_missing_config_exit_2(tmp_path):
    assert main(["run", "--config", str(tmp_path / "none.toml")]) == 2


def test_replay_reproduces_alert_log(run_dir, tmp_path):
    original = (run_dir / "alerts.jsonl").read_bytes()
    assert original
    for mode in ("global", "per-pixel"):
        out = tmp_path / f"replay-{mode}.jsonl"
        assert main(["replay", "--run", str(run_dir), "--query-mode", mode, "--out", str(out)]) == 0
        assert out.read_bytes() == original


def test_replay_explicit_inputs(run_dir, tmp_path, capsys):
    code = main(["replay", str(run_dir / "events.nt"), "--query", str(run_dir / "query.rsq"),
                 "--blind-zones", str(run_dir / "blind_zones.csv"), "--until", "2m"])
    assert code == 0
    assert capsys.readouterr().out.encode() == (run_dir / "alerts.jsonl").read_bytes()


def test_replay_with_blind_zone(run_dir, tmp_path):
    bz = tmp_path / "bz.csv"
    bz.write_text("329863,246792\n")
    out = tmp_path / "a.jsonl"
    assert main(["replay", "--run", str(run_dir), "--blind-zones", str(bz), "--out", str(out)]) == 0
    assert all(json.loads(l)["lat_milli"] != 329863 for l in out.read_text().splitlines())


def test_replay_with_raised_threshold(run_dir, tmp_path):
    q = tmp_path / "q500.rsq"
    q.write_text((run_dir / "query.rsq").read_text().replace("HAVING (?counter > 10)", "HAVING (?counter > 500)"))
    out = tmp_path / "a.jsonl"
    assert main(["replay", "--run", str(run_dir), "--query", str(q), "--out", str(out)]) == 0
    assert out.read_text() == ""


def test_replay_malformed_line_exit_3(run_dir, tmp_path, capsys):
    lines = (run_dir / "events.nt").read_text().splitlines(keepends=True)
    lines[4] = lines[4].replace(" . #", " #")
    bad = tmp_path / "bad.nt"
    bad.write_text("".join(lines))
    assert main(["replay", str(bad), "--query", str(run_dir / "query.rsq")]) == 3
    assert "line 5" in capsys.readouterr().err


def test_parse_query_listing1(capsys):
    assert main(["parse-query", str(GOLDEN / "01_listing1.rsq")]) == 0
    assert capsys.readouterr().out == (GOLDEN / "01_listing1.expected").read_text()


def test_parse_query_warnings(capsys):
    assert main(["parse-query", "--warnings", str(GOLDEN / "01_listing1.rsq")]) == 0
    assert "NONGROUPED_PROJECTION" in capsys.readouterr().err


def test_parse_query_missing_window(tmp_path, capsys):
    p = tmp_path / "nowin.rsq"
    p.write_text((GOLDEN / "01_listing1.rsq").read_text().replace("[RANGE 30m STEP 5s]", ""))
    assert main(["parse-query", str(p)]) == 2
    assert "missing-window" in capsys.readouterr().err


def test_parse_query_empty_file(tmp_path, capsys):
    p = tmp_path / "empty.rsq"
    p.write_text("")
    assert main(["parse-query", str(p)]) == 2
    assert f"{p}:1:1: syntax error" in capsys.readouterr().err


def test_parse_query_validation_diagnostics(tmp_path, capsys):
    p = tmp_path / "zero.rsq"
    p.write_text((GOLDEN / "01_listing1.rsq").read_text().replace("RANGE 30m", "RANGE 0s"))
    assert main(["parse-query", str(p)]) == 2
    assert "INVALID_WINDOW" in capsys.readouterr().err


def test_report(run_dir, capsys):
    assert main(["report", str(run_dir)]) == 0
    out = capsys.readouterr().out
    assert "fail_to_report: 0" in out and "false_alarm: 0" in out
    wide = (run_dir / "series_wide.csv").read_text().splitlines()
    assert wide[0] == "eval_time_ms,329863_246792"
    counts = [int(l.split(",")[1]) for l in wide[1:]]
    before = [c for l, c in zip(wide[1:], counts) if int(l.split(",")[0]) < 41_234]
    assert max(before) <= 10 and counts[-1] == 30


def test_report_empty_dir_exit_3(tmp_path, capsys):
    assert main(["report", str(tmp_path)]) == 3
    assert "missing artifacts" in capsys.readouterr().err
