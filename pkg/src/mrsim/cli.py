"""Command-line front door: validate configs, run scenarios, replay traces,
emit reports, and serve the interactive console.

Exit codes: 0 success, 2 config error, 3 invariant violation, 4 I/O error.
Log level comes from the MRS_LOG_LEVEL environment variable
(error|warn|info|debug|trace).
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

from mrsim import sim
from mrsim.metrics import (
    InvariantViolation,
    replay_metrics,
    robot_reports_csv,
    system_series_csv,
)
from mrsim.scenario import ScenarioConfig, ScenarioError, default_config, load_scenario
from mrsim.tracelog import TraceError, parse_trace

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_INVARIANT = 3
EXIT_IO = 4

_LOG_LEVELS = {
    "error": logging.ERROR,
    "warn": logging.WARNING,
    "info": logging.INFO,
    "debug": logging.DEBUG,
    "trace": logging.DEBUG,
}

logger = logging.getLogger(__name__)


def _setup_logging() -> None:
    level = _LOG_LEVELS.get(os.environ.get("MRS_LOG_LEVEL", "warn").lower(), logging.WARNING)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")


def _parse_duration_minutes(text: str) -> int:
    text = text.strip().lower()
    if text.endswith("m"):
        text = text[:-1]
    return int(text)


def _load_config(args) -> ScenarioConfig:
    if args.scenario == "default":
        config = default_config()
    else:
        config = load_scenario(args.scenario)
    if getattr(args, "seed", None) is not None:
        import dataclasses

        config = dataclasses.replace(config, seed=args.seed)
    if getattr(args, "duration", None) is not None:
        import dataclasses

        config = dataclasses.replace(config, duration_min=_parse_duration_minutes(args.duration))
    problems = config.validate()
    if problems:
        raise ScenarioError(problems)
    return config


def cmd_run(args) -> int:
    try:
        config = _load_config(args)
    except (OSError, ScenarioError) as exc:
        return _config_failure(exc)
    try:
        output = sim.run(config)
    except InvariantViolation as exc:
        print(f"invariant violation: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    out_dir = Path(args.out)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        _write_metrics(out_dir, args.format, output.series_rows, output.robot_reports)
        (out_dir / "trace.log").write_text(output.trace_jsonl, "utf-8")
        (out_dir / "outcomes.log").write_text(_outcomes_jsonl(output.outcomes), "utf-8")
    except OSError as exc:
        print(f"cannot write outputs: {exc}", file=sys.stderr)
        return EXIT_IO
    last = output.series_rows[-1] if output.series_rows else None
    if last is not None:
        print(
            f"run complete: {last.received} received, {last.success} success, "
            f"{last.failed} failed, outputs in {out_dir}"
        )
    else:
        print(f"run complete, outputs in {out_dir}")
    return EXIT_OK


def _write_metrics(out_dir: Path, fmt: str, rows, reports) -> None:
    if fmt == "structured":
        (out_dir / "system_series.jsonl").write_text(_series_jsonl(rows), "utf-8")
        (out_dir / "robot_report.jsonl").write_text(_reports_jsonl(reports), "utf-8")
    else:
        (out_dir / "system_series.csv").write_text(system_series_csv(rows), "utf-8")
        (out_dir / "robot_report.csv").write_text(robot_reports_csv(reports), "utf-8")


def _outcomes_jsonl(outcomes: list[dict]) -> str:
    import json

    return "".join(json.dumps(o, sort_keys=True, separators=(",", ":")) + "\n" for o in outcomes)


def _series_jsonl(rows) -> str:
    import json

    return "".join(
        json.dumps(
            {
                "t_min": row.t_min,
                "received": row.received,
                "processed": row.processed,
                "unprocessed": row.unprocessed,
                "success": row.success,
                "failed": row.failed,
                "latency_s": row.latency_ms / 1000.0,
                "efficiency": row.efficiency,
            },
            sort_keys=True,
            separators=(",", ":"),
        )
        + "\n"
        for row in rows
    )


def _reports_jsonl(reports) -> str:
    import json

    return "".join(
        json.dumps(
            {
                "robot_id": report.robot_id,
                "t_c_s": report.t_c_ms / 1000.0,
                "t_unc_s": report.t_unc_ms / 1000.0,
                "t_r_s": report.t_r_ms / 1000.0,
                "t_unr_s": report.t_unr_ms / 1000.0,
                "t_ov_s": report.t_ov_ms / 1000.0,
                "tasks_completed": report.tasks_completed,
                "availability": report.availability,
                "utilization": report.utilization,
                "effectiveness": report.effectiveness,
            },
            sort_keys=True,
            separators=(",", ":"),
        )
        + "\n"
        for report in reports
    )


def cmd_validate(args) -> int:
    try:
        _load_config(args)
    except (OSError, ScenarioError) as exc:
        return _config_failure(exc)
    print("scenario is valid")
    return EXIT_OK


def _config_failure(exc: Exception) -> int:
    if isinstance(exc, ScenarioError):
        for problem in exc.problems:
            print(f"scenario error: {problem}", file=sys.stderr)
        return EXIT_CONFIG
    print(f"cannot read scenario: {exc}", file=sys.stderr)
    return EXIT_IO if isinstance(exc, OSError) else EXIT_CONFIG


def cmd_replay(args) -> int:
    try:
        text = Path(args.trace).read_text("utf-8")
    except OSError as exc:
        print(f"cannot read trace: {exc}", file=sys.stderr)
        return EXIT_IO
    try:
        records = parse_trace(text)
    except TraceError as exc:
        print(f"trace error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    rows, reports = replay_metrics(records)
    out_dir = Path(args.out)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        _write_metrics(out_dir, args.format, rows, reports)
    except OSError as exc:
        print(f"cannot write outputs: {exc}", file=sys.stderr)
        return EXIT_IO
    print(f"replayed {len(records)} records into {len(rows)} rows, outputs in {out_dir}")
    return EXIT_OK


def cmd_report(args) -> int:
    out_dir = Path(args.out)
    series_path = out_dir / "system_series.csv"
    robots_path = out_dir / "robot_report.csv"
    try:
        series = series_path.read_text("utf-8").strip().split("\n")
        robots = robots_path.read_text("utf-8").strip().split("\n")
    except OSError as exc:
        print(f"cannot read report inputs: {exc}", file=sys.stderr)
        return EXIT_IO
    print("system series (final row):")
    print("  " + series[0])
    if len(series) > 1:
        print("  " + series[-1])
    print("robot indicators:")
    for line in robots:
        print("  " + line)
    return EXIT_OK


def cmd_serve(args) -> int:
    try:
        config = _load_config(args)
    except (OSError, ScenarioError) as exc:
        return _config_failure(exc)
    try:
        import uvicorn

        from mrsim.service import create_app
    except ImportError as exc:  # pragma: no cover - service deps are defaults
        print(f"service dependencies missing: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    app = create_app(config, speed=args.speed, ui_dir=args.ui_dir)
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mrsim", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run a scenario and write outputs")
    run_p.add_argument("--scenario", required=True, help="scenario file path, or 'default'")
    run_p.add_argument("--seed", type=int, default=None, help="override the scenario seed")
    run_p.add_argument("--duration", default=None, help="override duration, e.g. 30m")
    run_p.add_argument("--out", required=True, help="output directory")
    run_p.add_argument("--format", choices=("csv", "structured"), default="csv")
    run_p.set_defaults(func=cmd_run)

    val_p = sub.add_parser("validate", help="validate a scenario file")
    val_p.add_argument("--scenario", required=True)
    val_p.set_defaults(func=cmd_validate)

    rep_p = sub.add_parser("replay", help="recompute metrics from a trace")
    rep_p.add_argument("--trace", required=True)
    rep_p.add_argument("--out", required=True)
    rep_p.add_argument("--format", choices=("csv", "structured"), default="csv")
    rep_p.set_defaults(func=cmd_replay)

    report_p = sub.add_parser("report", help="print a summary of a run's outputs")
    report_p.add_argument("--out", required=True, help="directory produced by run/replay")
    report_p.set_defaults(func=cmd_report)

    serve_p = sub.add_parser("serve", help="serve the interactive console API")
    serve_p.add_argument("--scenario", default="default")
    serve_p.add_argument("--seed", type=int, default=None)
    serve_p.add_argument("--duration", default=None)
    serve_p.add_argument("--speed", type=float, default=1.0, help="logical seconds per wall second")
    serve_p.add_argument("--host", default="127.0.0.1")
    serve_p.add_argument("--port", type=int, default=8000)
    serve_p.add_argument("--ui-dir", default=None, help="static console bundle to mount at /ui")
    serve_p.set_defaults(func=cmd_serve)
    return parser


def main(argv=None) -> int:
    _setup_logging()
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
