"""Replayable run trace: delivered messages plus typed state-change events.

The trace is line-delimited JSON. The first record is a header (format
version, seed, duration, sampling grid, initial robot fleet); the last is an
``end`` record whose absence marks a truncated trace. In between, ``msg``
records log every delivered bus message and ``evt`` records log state
changes (request arrivals and outcomes, robot state transitions, plan and
task lifecycle) at their exact causal position. The metric suite is fully
recomputable from the ``evt`` records alone.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Any, Callable, Iterable, Optional

TRACE_VERSION = 1

# evt kinds
REQUEST_RECEIVED = "request_received"
REQUEST_OUTCOME = "request_outcome"
ROBOT_STATE = "robot_state"
PLAN_CREATED = "plan_created"
PLAN_FAILED = "plan_failed"
TASK_ASSIGNED = "task_assigned"
TASK_COMPLETED = "task_completed"

EVENT_KINDS = frozenset(
    {
        REQUEST_RECEIVED,
        REQUEST_OUTCOME,
        ROBOT_STATE,
        PLAN_CREATED,
        PLAN_FAILED,
        TASK_ASSIGNED,
        TASK_COMPLETED,
    }
)


class TraceError(Exception):
    pass


class TraceTruncatedError(TraceError):
    pass


class TraceVersionError(TraceError):
    pass


def _canon(obj: Any) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


@dataclass
class TraceLog:
    """In-memory ordered record list with JSONL round-tripping."""

    records: list[dict] = field(default_factory=list)

    def write_header(self, payload: dict) -> None:
        self.records.append({"kind": "header", "version": TRACE_VERSION, **payload})

    def write_msg(
        self,
        t_ms: int,
        performative: str,
        sender: str,
        receiver: str,
        conversation_id: str,
        content: dict,
    ) -> None:
        self.records.append(
            {
                "kind": "msg",
                "t": t_ms,
                "performative": performative,
                "sender": sender,
                "receiver": receiver,
                "conversation_id": conversation_id,
                "content_kind": content.get("kind", ""),
                "content": content,
            }
        )

    def write_evt(self, t_ms: int, event: str, payload: dict) -> None:
        if event not in EVENT_KINDS:
            raise TraceError(f"unknown trace event kind {event!r}")
        self.records.append({"kind": "evt", "t": t_ms, "event": event, "payload": payload})

    def write_end(self, t_ms: int) -> None:
        self.records.append({"kind": "end", "t": t_ms, "records": len(self.records)})

    def to_jsonl(self) -> str:
        return "".join(_canon(r) + "\n" for r in self.records)


def parse_trace(text: str) -> list[dict]:
    """Parse trace JSONL, enforcing header/end framing.

    An empty document parses to an empty record list. A document with a
    header but no closing ``end`` record raises TraceTruncatedError.
    """
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        return []
    records = []
    for i, line in enumerate(lines):
        try:
            records.append(json.loads(line))
        except json.JSONDecodeError as exc:
            if i == len(lines) - 1:
                raise TraceTruncatedError(f"trace cut off mid-record at line {i + 1}") from exc
            raise TraceError(f"malformed trace record at line {i + 1}") from exc
    header = records[0]
    if header.get("kind") != "header":
        raise TraceError("trace does not start with a header record")
    if header.get("version") != TRACE_VERSION:
        raise TraceVersionError(
            f"trace version {header.get('version')!r} is not supported (expected {TRACE_VERSION})"
        )
    if records[-1].get("kind") != "end":
        raise TraceTruncatedError("trace has no end record (truncated)")
    return records


class EventTap:
    """Synchronous state-change feed: writes evt records and fans out to observers.

    Emission happens at the exact instant the change occurs on the simulation
    loop, so trace order is true causal order.
    """

    def __init__(self, trace: Optional[TraceLog] = None):
        self.trace = trace
        self._observers: list[Callable[[int, str, dict], None]] = []

    def subscribe(self, observer: Callable[[int, str, dict], None]) -> None:
        self._observers.append(observer)

    def emit(self, t_ms: int, event: str, payload: dict) -> None:
        if self.trace is not None:
            self.trace.write_evt(t_ms, event, payload)
        for observer in self._observers:
            observer(t_ms, event, payload)


def iter_events(records: Iterable[dict]) -> Iterable[tuple[int, str, dict]]:
    for rec in records:
        if rec.get("kind") == "evt":
            yield rec["t"], rec["event"], rec["payload"]
