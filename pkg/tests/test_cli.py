"""Command-line interface: run, validate, replay, report."""

from importlib import resources
from pathlib import Path

import pytest

from mrsim.cli import EXIT_CONFIG, EXIT_IO, EXIT_OK, main

DEFAULT_SCENARIO = resources.files("mrsim").joinpath("scenarios/default.yaml")


@pytest.fixture
def scenario_file(tmp_path):
    path = tmp_path / "scenario.yaml"
    text = DEFAULT_SCENARIO.read_text("utf-8")
    path.write_text(text.replace("duration_min: 30", "duration_min: 4"), "utf-8")
    return path


def test_run_writes_four_outputs(scenario_file, tmp_path, capsys):
    out = tmp_path / "out"
    code = main(["run", "--scenario", str(scenario_file), "--out", str(out)])
    assert code == EXIT_OK
    for name in ("system_series.csv", "robot_report.csv", "trace.log", "outcomes.log"):
        assert (out / name).exists(), name
    assert "run complete" in capsys.readouterr().out


def test_run_same_seed_twice_identical_outputs(scenario_file, tmp_path):
    out1, out2 = tmp_path / "a", tmp_path / "b"
    assert main(["run", "--scenario", str(scenario_file), "--seed", "42", "--out", str(out1)]) == EXIT_OK
    assert main(["run", "--scenario", str(scenario_file), "--seed", "42", "--out", str(out2)]) == EXIT_OK
    for name in ("system_series.csv", "robot_report.csv", "trace.log", "outcomes.log"):
        assert (out1 / name).read_bytes() == (out2 / name).read_bytes(), name


def test_run_invalid_scenario_exits_2(tmp_path, capsys):
    bad = tmp_path / "bad.yaml"
    bad.write_text("duration_min: 0\nrequest_kind_weights: {Rq1: 1.0}\n", "utf-8")
    code = main(["run", "--scenario", str(bad), "--out", str(tmp_path / "out")])
    assert code == EXIT_CONFIG
    assert "scenario error" in capsys.readouterr().err


def test_run_missing_scenario_file_exits_4(tmp_path):
    code = main(["run", "--scenario", str(tmp_path / "nope.yaml"), "--out", str(tmp_path / "o")])
    assert code == EXIT_IO


def test_validate_accepts_shipped_default(scenario_file):
    assert main(["validate", "--scenario", str(scenario_file)]) == EXIT_OK
    assert main(["validate", "--scenario", "default"]) == EXIT_OK


def test_duration_override(scenario_file, tmp_path):
    out = tmp_path / "out"
    assert main(["run", "--scenario", str(scenario_file), "--duration", "2m", "--out", str(out)]) == EXIT_OK
    series = (out / "system_series.csv").read_text("utf-8").strip().split("\n")
    assert len(series) == 1 + 2  # header + 2 rows


def test_replay_reproduces_run_metrics(scenario_file, tmp_path):
    out = tmp_path / "out"
    replayed = tmp_path / "replayed"
    assert main(["run", "--scenario", str(scenario_file), "--out", str(out)]) == EXIT_OK
    code = main(["replay", "--trace", str(out / "trace.log"), "--out", str(replayed)])
    assert code == EXIT_OK
    assert (replayed / "system_series.csv").read_bytes() == (out / "system_series.csv").read_bytes()
    assert (replayed / "robot_report.csv").read_bytes() == (out / "robot_report.csv").read_bytes()


def test_replay_truncated_trace_errors(scenario_file, tmp_path, capsys):
    out = tmp_path / "out"
    main(["run", "--scenario", str(scenario_file), "--out", str(out)])
    trace = out / "trace.log"
    lines = trace.read_text("utf-8").splitlines()
    trace.write_text("\n".join(lines[:-1]) + "\n", "utf-8")  # drop the end record
    code = main(["replay", "--trace", str(trace), "--out", str(tmp_path / "r")])
    assert code == EXIT_CONFIG
    assert "truncated" in capsys.readouterr().err


def test_replay_empty_trace_gives_empty_series(tmp_path):
    trace = tmp_path / "empty.log"
    trace.write_text("", "utf-8")
    out = tmp_path / "r"
    assert main(["replay", "--trace", str(trace), "--out", str(out)]) == EXIT_OK
    series = (out / "system_series.csv").read_text("utf-8").strip().split("\n")
    assert len(series) == 1  # header only


def test_structured_format_emits_jsonl_metrics(scenario_file, tmp_path):
    import json

    out = tmp_path / "out"
    code = main(
        ["run", "--scenario", str(scenario_file), "--format", "structured", "--out", str(out)]
    )
    assert code == EXIT_OK
    series = [json.loads(l) for l in (out / "system_series.jsonl").read_text().splitlines()]
    assert len(series) == 4
    assert {"t_min", "received", "efficiency"} <= set(series[0])
    reports = [json.loads(l) for l in (out / "robot_report.jsonl").read_text().splitlines()]
    assert {r["robot_id"] for r in reports} == {"R1", "R2", "R3"}
    assert not (out / "system_series.csv").exists()


def test_report_prints_tables(scenario_file, tmp_path, capsys):
    out = tmp_path / "out"
    main(["run", "--scenario", str(scenario_file), "--out", str(out)])
    capsys.readouterr()
    assert main(["report", "--out", str(out)]) == EXIT_OK
    printed = capsys.readouterr().out
    assert "robot indicators" in printed
    assert "R1" in printed
