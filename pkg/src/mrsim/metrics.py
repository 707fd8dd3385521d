"""System and robot performance indicators.

System side: received / processed / unprocessed request counters, success
and failure counts, latency (age of the oldest pending request, zero exactly
when nothing is pending), and efficiency (successes per failure, absent when
nothing has failed). Robot side: the controlled / uncontrolled / registered /
unregistered / overall time split and the three derived ratios:

    availability  = registered time / overall time
    utilization   = controlled time / overall time
    effectiveness = controlled time / uncontrolled time

The collector consumes the trace's state-change events, so a recorded trace
replays into byte-identical metric exports.
"""

from __future__ import annotations

import io
from dataclasses import dataclass
from typing import Iterable, Optional

from mrsim import tracelog
from mrsim.knowledge_base import Lifecycle

SAMPLE_INTERVAL_MS_DEFAULT = 60_000


class InvariantViolation(Exception):
    pass


@dataclass(frozen=True)
class SystemSeriesRow:
    t_min: int
    received: int
    processed: int
    unprocessed: int
    success: int
    failed: int
    latency_ms: int
    efficiency: Optional[float]

    @property
    def latency_s(self) -> float:
        return self.latency_ms / 1000.0

    def check(self) -> None:
        if self.processed + self.unprocessed != self.received:
            raise InvariantViolation(
                f"t={self.t_min}min: processed {self.processed} + unprocessed "
                f"{self.unprocessed} != received {self.received}"
            )
        if self.success + self.failed != self.processed:
            raise InvariantViolation(
                f"t={self.t_min}min: success {self.success} + failed {self.failed} "
                f"!= processed {self.processed}"
            )
        if (self.latency_ms == 0) != (self.unprocessed == 0):
            raise InvariantViolation(
                f"t={self.t_min}min: latency {self.latency_ms}ms vs unprocessed {self.unprocessed}"
            )


def availability(t_r_ms: int, t_ov_ms: int) -> float:
    return t_r_ms / t_ov_ms if t_ov_ms > 0 else 0.0


def utilization(t_c_ms: int, t_ov_ms: int) -> float:
    return t_c_ms / t_ov_ms if t_ov_ms > 0 else 0.0


def effectiveness(t_c_ms: int, t_unc_ms: int) -> Optional[float]:
    return t_c_ms / t_unc_ms if t_unc_ms > 0 else None


@dataclass(frozen=True)
class RobotReport:
    robot_id: str
    t_c_ms: int
    t_unc_ms: int
    t_r_ms: int
    t_unr_ms: int
    t_ov_ms: int
    tasks_completed: int
    availability: float
    utilization: float
    effectiveness: Optional[float]

    @classmethod
    def from_times(
        cls,
        robot_id: str,
        t_c_ms: int,
        t_unc_ms: int,
        t_r_ms: int,
        t_ov_ms: int,
        t_unr_ms: Optional[int] = None,
        tasks_completed: int = 0,
    ) -> "RobotReport":
        if t_unr_ms is None:
            t_unr_ms = t_ov_ms - t_r_ms
        return cls(
            robot_id,
            t_c_ms,
            t_unc_ms,
            t_r_ms,
            t_unr_ms,
            t_ov_ms,
            tasks_completed,
            availability(t_r_ms, t_ov_ms),
            utilization(t_c_ms, t_ov_ms),
            effectiveness(t_c_ms, t_unc_ms),
        )


@dataclass
class _RobotTimeline:
    created_at: int
    state: Lifecycle
    since: int
    t_c: int = 0
    t_unc: int = 0
    t_unr: int = 0
    tasks_completed: int = 0

    def transition(self, new_state: Lifecycle, now: int) -> None:
        self._accrue(now)
        self.state = new_state
        self.since = now

    def _accrue(self, now: int) -> None:
        elapsed = now - self.since
        if self.state is Lifecycle.CONTROLLED:
            self.t_c += elapsed
        elif self.state is Lifecycle.UNCONTROLLED:
            self.t_unc += elapsed
        else:
            self.t_unr += elapsed
        self.since = now

    def report(self, robot_id: str, now: int) -> RobotReport:
        t_c, t_unc, t_unr = self.t_c, self.t_unc, self.t_unr
        elapsed = now - self.since
        if self.state is Lifecycle.CONTROLLED:
            t_c += elapsed
        elif self.state is Lifecycle.UNCONTROLLED:
            t_unc += elapsed
        else:
            t_unr += elapsed
        t_r = t_c + t_unc
        return RobotReport.from_times(
            robot_id, t_c, t_unc, t_r, t_r + t_unr, t_unr, self.tasks_completed
        )


class MetricsCollector:
    """Accumulates counters and robot time splits from state-change events."""

    def __init__(self):
        self.received = 0
        self.processed = 0
        self.success = 0
        self.failed = 0
        self.pending: dict[str, int] = {}  # request id -> arrival time (insertion order)
        self.outcomes: list[dict] = []
        self.completed_latencies_ms: list[int] = []
        self.robots: dict[str, _RobotTimeline] = {}
        self._last_t = 0

    # -- event intake -----------------------------------------------------------

    def on_event(self, t_ms: int, event: str, payload: dict) -> None:
        if t_ms < self._last_t:
            raise InvariantViolation(f"event at t={t_ms} arrived after t={self._last_t}")
        self._last_t = t_ms
        if event == tracelog.REQUEST_RECEIVED:
            self.received += 1
            self.pending[payload["request_id"]] = t_ms
        elif event == tracelog.REQUEST_OUTCOME:
            arrival = self.pending.pop(payload["request_id"], None)
            self.processed += 1
            if payload["status"] == "success":
                self.success += 1
            else:
                self.failed += 1
            if arrival is not None:
                self.completed_latencies_ms.append(t_ms - arrival)
            self.outcomes.append({"t": t_ms, **payload})
        elif event == tracelog.ROBOT_STATE:
            robot_id = payload["robot_id"]
            state = Lifecycle(payload["state"])
            timeline = self.robots.get(robot_id)
            if timeline is None:
                self.robots[robot_id] = _RobotTimeline(
                    created_at=t_ms, state=state, since=t_ms
                )
            else:
                timeline.transition(state, t_ms)
        elif event == tracelog.TASK_COMPLETED and payload.get("result") == "success":
            timeline = self.robots.get(payload["robot_id"])
            if timeline is not None:
                timeline.tasks_completed += 1

    def track_robot(
        self,
        robot_id: str,
        created_at: int,
        state: Lifecycle = Lifecycle.UNREGISTERED,
        tasks_completed: int = 0,
    ) -> None:
        """Pre-announce a pool robot (from the trace header or scenario)."""
        if robot_id not in self.robots:
            self.robots[robot_id] = _RobotTimeline(
                created_at=created_at, state=state, since=created_at, tasks_completed=tasks_completed
            )

    # -- snapshots ----------------------------------------------------------------

    def system_snapshot(self, t_ms: int) -> SystemSeriesRow:
        unprocessed = len(self.pending)
        if self.received - self.processed != unprocessed:
            raise InvariantViolation("pending set diverged from received - processed")
        latency_ms = 0
        if self.pending:
            oldest = next(iter(self.pending.values()))
            latency_ms = t_ms - oldest
        efficiency = self.success / self.failed if self.failed > 0 else None
        row = SystemSeriesRow(
            t_min=t_ms // 60_000,
            received=self.received,
            processed=self.processed,
            unprocessed=unprocessed,
            success=self.success,
            failed=self.failed,
            latency_ms=latency_ms,
            efficiency=efficiency,
        )
        row.check()
        return row

    def robot_report(self, robot_id: str, t_ms: int) -> RobotReport:
        timeline = self.robots.get(robot_id)
        if timeline is None:
            raise KeyError(f"unknown robot {robot_id!r}")
        return timeline.report(robot_id, t_ms)

    def all_robot_reports(self, t_ms: int) -> list[RobotReport]:
        return [self.robot_report(robot_id, t_ms) for robot_id in sorted(self.robots)]


# -- CSV rendering ----------------------------------------------------------------

SYSTEM_CSV_HEADER = "t_min,received,processed,unprocessed,success,failed,latency_s,efficiency"
ROBOT_CSV_HEADER = (
    "robot_id,t_c_s,t_unc_s,t_r_s,t_unr_s,t_ov_s,tasks_completed,"
    "availability,utilization,effectiveness"
)


def _fmt_seconds(ms: int) -> str:
    return f"{ms / 1000.0:.3f}"


def _fmt_ratio(value: Optional[float]) -> str:
    return "" if value is None else f"{value:.6f}"


def system_series_csv(rows: Iterable[SystemSeriesRow]) -> str:
    out = io.StringIO()
    out.write(SYSTEM_CSV_HEADER + "\n")
    for row in rows:
        out.write(
            f"{row.t_min},{row.received},{row.processed},{row.unprocessed},"
            f"{row.success},{row.failed},{_fmt_seconds(row.latency_ms)},"
            f"{_fmt_ratio(row.efficiency)}\n"
        )
    return out.getvalue()


def robot_reports_csv(reports: Iterable[RobotReport]) -> str:
    out = io.StringIO()
    out.write(ROBOT_CSV_HEADER + "\n")
    for report in reports:
        out.write(
            f"{report.robot_id},{_fmt_seconds(report.t_c_ms)},{_fmt_seconds(report.t_unc_ms)},"
            f"{_fmt_seconds(report.t_r_ms)},{_fmt_seconds(report.t_unr_ms)},"
            f"{_fmt_seconds(report.t_ov_ms)},{report.tasks_completed},"
            f"{_fmt_ratio(report.availability)},{_fmt_ratio(report.utilization)},"
            f"{_fmt_ratio(report.effectiveness)}\n"
        )
    return out.getvalue()


# -- replay -------------------------------------------------------------------------


def replay_metrics(records: list[dict]) -> tuple[list[SystemSeriesRow], list[RobotReport]]:
    """Recompute the full metric suite from a parsed trace.

    Sampling is re-derived from the header grid; a sample at time s reflects
    events strictly before s, matching the live sampling order.
    """
    if not records:
        return [], []
    header = records[0]
    duration_ms = header["duration_ms"]
    interval_ms = header["sample_interval_ms"]
    collector = MetricsCollector()
    for robot in header.get("robots", []):
        collector.track_robot(
            robot["robot_id"],
            robot.get("created_at", 0),
            Lifecycle.UNREGISTERED,
            tasks_completed=robot.get("tasks_completed", 0),
        )
    rows: list[SystemSeriesRow] = []
    next_sample = interval_ms
    for t_ms, event, payload in tracelog.iter_events(records):
        while next_sample <= t_ms and next_sample <= duration_ms:
            rows.append(collector.system_snapshot(next_sample))
            next_sample += interval_ms
        collector.on_event(t_ms, event, payload)
    while next_sample <= duration_ms:
        rows.append(collector.system_snapshot(next_sample))
        next_sample += interval_ms
    reports = collector.all_robot_reports(duration_ms)
    return rows, reports
