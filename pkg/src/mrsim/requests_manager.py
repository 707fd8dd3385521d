"""Requests Manager: FCFS request scheduling, blueprint lookup, planner
handoff, timeout policing, and requestor feedback.

Each accepted request is driven by one process-engine instance that blocks
at a gate per phase (blueprint lookup, planner feedback, execution feedback)
until this agent supplies the phase's condition keys from delivered messages
or fired deadlines.
"""

from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

from mrsim import events, tracelog
from mrsim.bus import AclMessage, AgentId, MessageBus, Performative
from mrsim.domain import FailureReason, Request, RequestOutcome, RequestStatus
from mrsim.events import EventHandle
from mrsim.knowledge_base import KnowledgeBase
from mrsim.planner import blueprint_payload
from mrsim.tracelog import EventTap
from mrsim.workflow import ProcessInstance, load_controller_process, run_to_quiescence

logger = logging.getLogger(__name__)

DEFAULT_PLAN_TIMEOUT_MS = 30_000
DEFAULT_EXEC_TIMEOUT_MS = 300_000

# plan_result reasons reported by the Robots Manager, mapped onto the
# request-level failure vocabulary
_EXEC_REASONS = {
    "task_failed": FailureReason.TASK_FAILED,
    "task_timeout": FailureReason.TASK_TIMEOUT,
    "robot_gone": FailureReason.TASK_FAILED,
}

_PLAN_REASONS = {
    FailureReason.INSUFFICIENT_ROBOTS.value: FailureReason.INSUFFICIENT_ROBOTS,
    FailureReason.CAPABILITY_MISMATCH.value: FailureReason.CAPABILITY_MISMATCH,
}


def _plan_reason(raw: str) -> FailureReason:
    return _PLAN_REASONS.get(raw, FailureReason.CAPABILITY_MISMATCH)


class EntryState(str, Enum):
    QUEUED = "queued"
    AWAITING_PLAN = "awaiting_plan"
    AWAITING_EXECUTION = "awaiting_execution"
    DONE = "done"


@dataclass
class RequestQueueEntry:
    request: Request
    requestor: AgentId
    state: EntryState = EntryState.QUEUED
    instance: Optional[ProcessInstance] = None
    env: dict = field(default_factory=dict)
    blueprint: Optional[dict] = None  # wire payload captured at lookup time
    timer: Optional[EventHandle] = None
    outcome: Optional[RequestOutcome] = None


class RequestsManager:
    name = "RqM"

    def __init__(
        self,
        bus: MessageBus,
        kb: KnowledgeBase,
        tap: EventTap,
        plan_timeout_ms: int = DEFAULT_PLAN_TIMEOUT_MS,
        exec_timeout_ms: int = DEFAULT_EXEC_TIMEOUT_MS,
    ):
        self.bus = bus
        self.kb = kb
        self.tap = tap
        self.plan_timeout_ms = plan_timeout_ms
        self.exec_timeout_ms = exec_timeout_ms
        self.definition = load_controller_process("rqm")
        self.aid = bus.register_agent(self.name, handler=self.on_message)
        self.pln_aid = AgentId("PLN")
        self.queue: deque[str] = deque()
        self.entries: dict[str, RequestQueueEntry] = {}
        self.received = 0

    # -- message entry points -------------------------------------------------

    def on_message(self, msg: AclMessage) -> None:
        kind = msg.content_kind
        if kind == "request":
            self.on_request(msg)
            self.dispatch_all()
        elif kind in ("plan_accepted", "plan_result"):
            self.on_feedback(msg)
        else:
            logger.warning("requests manager ignoring unexpected %s message", kind)

    def on_request(self, msg: AclMessage) -> bool:
        """Queue a fresh request; duplicates are refused and counted nowhere."""
        request_id = msg.content["id"]
        if request_id in self.entries:
            logger.info("refusing duplicate request id %s", request_id)
            self.bus.send(
                AclMessage(
                    Performative.REFUSE,
                    self.aid,
                    msg.sender,
                    msg.conversation_id,
                    {"kind": "request_rejected", "request_id": request_id, "reason": "duplicate id"},
                )
            )
            return False
        now = self.bus.scheduler.now
        request = Request(request_id, msg.content["request_kind"], now)
        self.entries[request_id] = RequestQueueEntry(request, msg.sender)
        self.queue.append(request_id)
        self.received += 1
        self.tap.emit(
            now, tracelog.REQUEST_RECEIVED, {"request_id": request_id, "request_kind": request.kind}
        )
        return True

    def dispatch_all(self) -> None:
        while self.queue:
            self.dispatch_next()

    def dispatch_next(self) -> None:
        """Pop the queue head and run its lifecycle instance to its first wait."""
        if not self.queue:
            return
        request_id = self.queue.popleft()
        entry = self.entries[request_id]
        entry.instance = ProcessInstance(self.definition)
        self._resume(entry)

    def on_feedback(self, msg: AclMessage) -> None:
        entry = self.entries.get(msg.conversation_id)
        if entry is None:
            logger.warning("feedback for unknown conversation %s ignored", msg.conversation_id)
            return
        if entry.state is EntryState.DONE:
            logger.info("late feedback for settled request %s ignored", msg.conversation_id)
            return
        if entry.state is EntryState.AWAITING_PLAN:
            self._cancel_timer(entry)
            if msg.content_kind == "plan_accepted":
                self._set_exclusive(entry, "plan", "plan_ok")
            else:
                reason = msg.content.get("reason", "")
                entry.env["plan_failure_reason"] = reason
                self._set_exclusive(entry, "plan", "plan_failed")
            self._resume(entry)
        elif entry.state is EntryState.AWAITING_EXECUTION:
            if msg.content_kind == "plan_accepted":
                logger.info("duplicate plan acceptance for %s ignored", msg.conversation_id)
                return
            self._cancel_timer(entry)
            if msg.performative is Performative.INFORM:
                self._set_exclusive(entry, "exec", "exec_ok")
            else:
                entry.env["exec_failure_reason"] = msg.content.get("reason", "")
                self._set_exclusive(entry, "exec", "exec_failed")
            self._resume(entry)

    def on_timeout(self, request_id: str) -> None:
        entry = self.entries.get(request_id)
        if entry is None or entry.state is EntryState.DONE:
            return
        entry.timer = None
        phase = "plan" if entry.state is EntryState.AWAITING_PLAN else "exec"
        self._set_exclusive(entry, phase, f"{phase}_timeout")
        self._resume(entry)

    # -- process actions -------------------------------------------------------

    def _resume(self, entry: RequestQueueEntry) -> None:
        run_to_quiescence(entry.instance, entry.env, self._handlers(entry))

    def _handlers(self, entry: RequestQueueEntry) -> dict:
        return {
            "lookup_blueprint": lambda: self._act_lookup(entry),
            "forward_to_planner": lambda: self._act_forward(entry),
            "report_no_blueprint": lambda: self._settle(entry, FailureReason.NO_BLUEPRINT),
            "report_plan_failure": lambda: self._settle(
                entry, _plan_reason(entry.env.get("plan_failure_reason", ""))
            ),
            "report_plan_timeout": lambda: self._settle(entry, FailureReason.PLAN_TIMEOUT),
            "await_execution": lambda: self._act_await_execution(entry),
            "report_success": lambda: self._settle(entry, None),
            "report_execution_failure": lambda: self._settle(
                entry, _EXEC_REASONS.get(entry.env.get("exec_failure_reason", ""), FailureReason.TASK_FAILED)
            ),
            "report_execution_timeout": lambda: self._settle(entry, FailureReason.TASK_TIMEOUT),
        }

    def _act_lookup(self, entry: RequestQueueEntry) -> None:
        pb = self.kb.find_blueprint(entry.request.kind)
        entry.env["blueprint_found"] = pb is not None
        entry.env["blueprint_missing"] = pb is None
        if pb is not None:
            entry.blueprint = blueprint_payload(pb)

    def _act_forward(self, entry: RequestQueueEntry) -> None:
        entry.state = EntryState.AWAITING_PLAN
        self.bus.send(
            AclMessage(
                Performative.REQUEST,
                self.aid,
                self.pln_aid,
                entry.request.id,
                {
                    "kind": "plan_request",
                    "request_id": entry.request.id,
                    "blueprint": entry.blueprint,
                },
            )
        )
        entry.timer = self.bus.scheduler.schedule_in(
            self.plan_timeout_ms,
            events.TIMER,
            lambda: self.on_timeout(entry.request.id),
            label=f"plan deadline {entry.request.id}",
        )

    def _act_await_execution(self, entry: RequestQueueEntry) -> None:
        entry.state = EntryState.AWAITING_EXECUTION
        entry.timer = self.bus.scheduler.schedule_in(
            self.exec_timeout_ms,
            events.TIMER,
            lambda: self.on_timeout(entry.request.id),
            label=f"execution deadline {entry.request.id}",
        )

    def _settle(self, entry: RequestQueueEntry, reason: Optional[FailureReason]) -> None:
        self._cancel_timer(entry)
        now = self.bus.scheduler.now
        status = RequestStatus.SUCCESS if reason is None else RequestStatus.FAILED
        entry.state = EntryState.DONE
        entry.outcome = RequestOutcome(entry.request.id, status, now, reason)
        payload = {
            "request_id": entry.request.id,
            "request_kind": entry.request.kind,
            "status": status.value,
            "arrival_t_ms": entry.request.arrival_t_ms,
        }
        if reason is not None:
            payload["reason"] = reason.value
        self.tap.emit(now, tracelog.REQUEST_OUTCOME, payload)
        performative = Performative.INFORM if reason is None else Performative.FAILURE
        self.bus.send(
            AclMessage(
                performative,
                self.aid,
                entry.requestor,
                entry.request.id,
                {"kind": "request_outcome", **payload},
            )
        )

    # -- helpers ----------------------------------------------------------------

    def _set_exclusive(self, entry: RequestQueueEntry, phase: str, chosen: str) -> None:
        for key in (f"{phase}_ok", f"{phase}_failed", f"{phase}_timeout"):
            entry.env[key] = key == chosen

    def _cancel_timer(self, entry: RequestQueueEntry) -> None:
        if entry.timer is not None:
            self.bus.scheduler.cancel(entry.timer)
            entry.timer = None

    # -- introspection ------------------------------------------------------------

    def counts(self) -> dict:
        processed = sum(1 for e in self.entries.values() if e.state is EntryState.DONE)
        return {
            "received": self.received,
            "processed": processed,
            "unprocessed": self.received - processed,
        }
