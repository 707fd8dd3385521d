"""Robots Manager plus simulated robot agents.

Owns the robot lifecycle (registration, deferred deregistration while busy),
executes verified plans strictly one task at a time, polices per-task
feedback deadlines, and reports plan-level outcomes to the Requests Manager.
Robot "work" is a scheduled completion event; a busy robot refuses a second
assignment and the refused plan is parked until that robot next frees.

Every robot tracks its three-state time split (controlled / uncontrolled /
unregistered) with integer-millisecond accounting, so the identities
controlled + uncontrolled = registered and registered + unregistered =
overall hold exactly at every event boundary.
"""

from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Optional

from mrsim import events, tracelog
from mrsim.bus import AclMessage, AgentId, MessageBus, Performative
from mrsim.domain import CapabilityId, RobotId, VerifiedPlan
from mrsim.events import EventHandle
from mrsim.knowledge_base import CapacityError, KnowledgeBase, KnowledgeBaseError, Lifecycle
from mrsim.planner import verified_plan_from_payload
from mrsim.rng import RandomStream
from mrsim.tracelog import EventTap
from mrsim.workflow import ProcessInstance, load_controller_process, run_to_quiescence

logger = logging.getLogger(__name__)

DEFAULT_TASK_DURATION_MS = 20_000
DEFAULT_TASK_TIMEOUT_MS = 60_000


@dataclass
class TimeSplit:
    """Per-robot accumulators; the bucket for the current state accrues lazily."""

    created_at: int
    state: Lifecycle
    since: int
    t_c: int = 0
    t_unc: int = 0
    t_unr: int = 0

    _BUCKET = {Lifecycle.CONTROLLED: "t_c", Lifecycle.UNCONTROLLED: "t_unc", Lifecycle.UNREGISTERED: "t_unr"}

    def transition(self, new_state: Lifecycle, now: int) -> None:
        bucket = self._BUCKET[self.state]
        setattr(self, bucket, getattr(self, bucket) + (now - self.since))
        self.state = new_state
        self.since = now

    def snapshot(self, now: int) -> dict[str, int]:
        """Accumulators as of ``now`` without mutating state."""
        values = {"t_c": self.t_c, "t_unc": self.t_unc, "t_unr": self.t_unr}
        values[self._BUCKET[self.state]] += now - self.since
        values["t_r"] = values["t_c"] + values["t_unc"]
        values["t_ov"] = values["t_r"] + values["t_unr"]
        return values


@dataclass
class RobotAgent:
    """A simulated robot: accepts one task at a time, works for a set
    duration, then reports success (or a fault-injected failure/stall)."""

    robot_id: RobotId
    capabilities: frozenset[CapabilityId]
    times: TimeSplit
    stall_probability: float = 0.0
    fail_probability: float = 0.0
    busy_conversation: Optional[str] = None
    aid: Optional[AgentId] = None

    @property
    def busy(self) -> bool:
        return self.busy_conversation is not None


@dataclass
class PlanExecution:
    pv: VerifiedPlan
    conversation_id: str
    cursor: int = 0
    attempts: int = 0
    deadline: Optional[EventHandle] = None
    parked_on: Optional[RobotId] = None
    inflight_conv: Optional[str] = None  # conversation of the live dispatch attempt

    @property
    def current(self) -> tuple[str, RobotId]:
        return self.pv.assignments[self.cursor]

    @property
    def done(self) -> bool:
        return self.cursor >= len(self.pv.assignments)


class RobotsManager:
    name = "RbM"

    def __init__(
        self,
        bus: MessageBus,
        kb: KnowledgeBase,
        tap: EventTap,
        fault_stream: RandomStream,
        jitter_stream: RandomStream,
        task_duration_ms: int = DEFAULT_TASK_DURATION_MS,
        task_jitter_ms: int = 0,
        task_timeout_ms: int = DEFAULT_TASK_TIMEOUT_MS,
        defer_busy_deregistration: bool = True,
    ):
        self.bus = bus
        self.kb = kb
        self.tap = tap
        self.fault_stream = fault_stream
        self.jitter_stream = jitter_stream
        self.task_duration_ms = task_duration_ms
        self.task_jitter_ms = task_jitter_ms
        self.task_timeout_ms = task_timeout_ms
        self.defer_busy_deregistration = defer_busy_deregistration
        self.definition = load_controller_process("rbm")
        self.aid = bus.register_agent(self.name, handler=self.on_message)
        self.rqm_aid = AgentId("RqM")
        self.agents: dict[RobotId, RobotAgent] = {}
        self.executions: dict[str, PlanExecution] = {}
        self.parked: dict[RobotId, deque[str]] = {}
        self.pending_deregistration: set[RobotId] = set()
        self._task_conversations: dict[str, str] = {}  # task conv -> plan conv

    # -- robot pool -----------------------------------------------------------

    def add_robot(
        self,
        robot_id: RobotId,
        capabilities: Iterable[CapabilityId],
        stall_probability: float = 0.0,
        fail_probability: float = 0.0,
    ) -> RobotAgent:
        """Create an unregistered robot in the pool (idempotent on id)."""
        if robot_id in self.agents:
            return self.agents[robot_id]
        now = self.bus.scheduler.now
        agent = RobotAgent(
            robot_id,
            frozenset(capabilities),
            TimeSplit(created_at=now, state=Lifecycle.UNREGISTERED, since=now),
            stall_probability,
            fail_probability,
        )
        self.agents[robot_id] = agent
        return agent

    # -- bus entry points -------------------------------------------------------

    def on_message(self, msg: AclMessage) -> None:
        kind = msg.content_kind
        if kind == "verified_plan":
            self.on_verified_plan(msg)
        elif kind == "registry_command":
            self.on_registry_command(msg)
        elif kind == "task_accepted":
            self._on_task_accepted(msg)
        elif kind in ("task_result", "task_refused"):
            self._on_task_reply(msg)
        else:
            logger.warning("robots manager ignoring unexpected %s message", kind)

    def on_verified_plan(self, msg: AclMessage) -> None:
        pv = verified_plan_from_payload(msg.content["plan"])
        if not pv.assignments:
            raise ValueError("verified plan with no assignments violates its invariant")
        execution = PlanExecution(pv, msg.conversation_id)
        self.executions[msg.conversation_id] = execution
        self._run_wave(execution, {"ev_dispatch": True, "ev_feedback": False})

    def on_registry_command(self, msg: AclMessage) -> None:
        op = msg.content["op"]
        robot_id = msg.content["robot_id"]
        try:
            if op == "register":
                deferred = self.handle_registration(
                    robot_id,
                    msg.content["capabilities"],
                    stall_probability=msg.content.get("stall_probability"),
                    fail_probability=msg.content.get("fail_probability"),
                )
            elif op == "deregister":
                deferred = self.handle_deregistration(robot_id)
            else:
                raise KnowledgeBaseError(f"unknown registry op {op!r}")
        except KnowledgeBaseError as exc:
            self.bus.send(
                AclMessage(
                    Performative.REFUSE,
                    self.aid,
                    msg.sender,
                    msg.conversation_id,
                    {
                        "kind": "registry_refused",
                        "op": op,
                        "robot_id": robot_id,
                        "reason": str(exc),
                        "capacity": isinstance(exc, CapacityError),
                    },
                )
            )
            return
        self.bus.send(
            AclMessage(
                Performative.AGREE,
                self.aid,
                msg.sender,
                msg.conversation_id,
                {"kind": "registry_ack", "op": op, "robot_id": robot_id, "deferred": deferred},
            )
        )

    # -- registration ------------------------------------------------------------

    def handle_registration(
        self,
        robot_id: RobotId,
        capabilities: Iterable[CapabilityId],
        stall_probability: Optional[float] = None,
        fail_probability: Optional[float] = None,
    ) -> bool:
        if robot_id in self.pending_deregistration:
            raise KnowledgeBaseError(f"robot {robot_id!r} is still deregistering")
        record = self.kb.robots.get(robot_id)
        if record is not None and record.registered:
            raise KnowledgeBaseError(f"robot {robot_id!r} is already registered")
        if self.bus.is_registered(robot_id):
            # robots leave the bus on departure, so a live name that is not a
            # registered robot belongs to a controller or driver agent
            raise KnowledgeBaseError(f"agent name {robot_id!r} is reserved")
        self.kb.register_robot(robot_id, capabilities)  # validates capacity
        agent = self.add_robot(robot_id, capabilities)
        agent.capabilities = frozenset(capabilities)
        if stall_probability is not None:
            agent.stall_probability = stall_probability
        if fail_probability is not None:
            agent.fail_probability = fail_probability
        agent.aid = self.bus.register_agent(
            robot_id, handler=lambda m, rid=robot_id: self._robot_on_message(rid, m)
        )
        for cap in sorted(agent.capabilities):
            self.bus.publish_service(agent.aid, f"capability:{cap}")
        self._set_robot_state(agent, Lifecycle.UNCONTROLLED)
        return False

    def handle_deregistration(self, robot_id: RobotId) -> bool:
        """Returns True when the deregistration is deferred behind a running task."""
        agent = self.agents.get(robot_id)
        record = self.kb.robots.get(robot_id)
        if agent is None or record is None or not record.registered:
            raise KnowledgeBaseError(f"robot {robot_id!r} is not registered")
        if agent.busy and self.defer_busy_deregistration:
            self.pending_deregistration.add(robot_id)
            return True
        if agent.busy:
            # fail-fast mode: abandon the running task, then leave
            self._abort_inflight_for_robot(robot_id)
        self._apply_deregistration(agent)
        return False

    def _apply_deregistration(self, agent: RobotAgent) -> None:
        self.pending_deregistration.discard(agent.robot_id)
        self.kb.deregister_robot(agent.robot_id)
        if agent.aid is not None and self.bus.is_registered(agent.robot_id):
            self.bus.deregister_agent(agent.robot_id)
        agent.aid = None
        self._set_robot_state(agent, Lifecycle.UNREGISTERED)
        self._fail_parked_plans(agent.robot_id)

    def _set_robot_state(self, agent: RobotAgent, state: Lifecycle) -> None:
        now = self.bus.scheduler.now
        agent.times.transition(state, now)
        if state is not Lifecycle.UNREGISTERED:
            self.kb.set_busy(agent.robot_id, state is Lifecycle.CONTROLLED)
        payload = {"robot_id": agent.robot_id, "state": state.value}
        if state is not Lifecycle.UNREGISTERED:
            payload["capabilities"] = sorted(agent.capabilities)
        self.tap.emit(now, tracelog.ROBOT_STATE, payload)

    # -- plan execution waves ------------------------------------------------------

    def _run_wave(self, execution: PlanExecution, env: dict) -> None:
        instance = ProcessInstance(self.definition)
        run_to_quiescence(instance, env, self._handlers(execution, env))

    def _handlers(self, execution: PlanExecution, env: dict) -> dict:
        return {
            "classify_event": lambda: None,  # env is pre-classified by the caller
            "check_assigned_robot": lambda: self._act_check_robot(execution, env),
            "send_assignment": lambda: self._act_send_assignment(execution),
            "abort_robot_gone": lambda: self._abort(execution, "robot_gone"),
            "park_plan": lambda: self._act_park(execution),
            "record_task_success": lambda: self._act_record_success(execution, env),
            "dispatch_next": lambda: self._dispatch_wave(execution),
            "complete_plan": lambda: self._act_complete(execution),
            "abort_task_failed": lambda: self._act_task_failed(execution),
            "abort_task_timeout": lambda: self._act_task_timeout(execution),
        }

    def _dispatch_wave(self, execution: PlanExecution) -> None:
        self._run_wave(execution, {"ev_dispatch": True, "ev_feedback": False})

    def _feedback_wave(self, execution: PlanExecution, outcome: str) -> None:
        env = {
            "ev_dispatch": False,
            "ev_feedback": True,
            "task_ok": outcome == "ok",
            "task_failed": outcome == "failed",
            "task_refused": outcome == "refused",
            "task_timeout": outcome == "timeout",
        }
        self._run_wave(execution, env)

    def _act_check_robot(self, execution: PlanExecution, env: dict) -> None:
        _, robot_id = execution.current
        record = self.kb.robots.get(robot_id)
        available = (
            record is not None
            and record.registered
            and robot_id not in self.pending_deregistration
        )
        env["robot_ok"] = available
        env["robot_gone"] = not available

    def _act_send_assignment(self, execution: PlanExecution) -> None:
        task_id, robot_id = execution.current
        execution.attempts += 1
        conv = f"{execution.conversation_id}/{task_id}#{execution.attempts}"
        execution.inflight_conv = conv
        self._task_conversations[conv] = execution.conversation_id
        agent = self.agents[robot_id]
        self.bus.send(
            AclMessage(
                Performative.REQUEST,
                self.aid,
                agent.aid,
                conv,
                {
                    "kind": "task_assignment",
                    "request_id": execution.pv.request_id,
                    "task_id": task_id,
                },
            )
        )
        execution.deadline = self.bus.scheduler.schedule_in(
            self.task_timeout_ms,
            events.TIMER,
            lambda: self.on_task_timeout(conv),
            label=f"task deadline {conv}",
        )

    def _act_park(self, execution: PlanExecution) -> None:
        self._cancel_deadline(execution)
        execution.inflight_conv = None  # the refused attempt is dead
        _, robot_id = execution.current
        execution.parked_on = robot_id
        self.parked.setdefault(robot_id, deque()).append(execution.conversation_id)

    def _act_record_success(self, execution: PlanExecution, env: dict) -> None:
        self._cancel_deadline(execution)
        execution.inflight_conv = None
        task_id, robot_id = execution.current
        self.kb.increment_history(robot_id)
        self.tap.emit(
            self.bus.scheduler.now,
            tracelog.TASK_COMPLETED,
            {
                "request_id": execution.pv.request_id,
                "task_id": task_id,
                "robot_id": robot_id,
                "result": "success",
            },
        )
        execution.cursor += 1
        env["plan_done"] = execution.done
        env["plan_remaining"] = not execution.done

    def _act_complete(self, execution: PlanExecution) -> None:
        self.executions.pop(execution.conversation_id, None)
        self.bus.send(
            AclMessage(
                Performative.INFORM,
                self.aid,
                self.rqm_aid,
                execution.conversation_id,
                {
                    "kind": "plan_result",
                    "status": "executed",
                    "request_id": execution.pv.request_id,
                },
            )
        )

    def _act_task_failed(self, execution: PlanExecution) -> None:
        self._cancel_deadline(execution)
        execution.inflight_conv = None
        task_id, robot_id = execution.current
        self.tap.emit(
            self.bus.scheduler.now,
            tracelog.TASK_COMPLETED,
            {
                "request_id": execution.pv.request_id,
                "task_id": task_id,
                "robot_id": robot_id,
                "result": "failure",
            },
        )
        self._abort(execution, "task_failed")

    def _act_task_timeout(self, execution: PlanExecution) -> None:
        task_id, robot_id = execution.current
        attempt = execution.inflight_conv
        execution.deadline = None
        self.tap.emit(
            self.bus.scheduler.now,
            tracelog.TASK_COMPLETED,
            {
                "request_id": execution.pv.request_id,
                "task_id": task_id,
                "robot_id": robot_id,
                "result": "timeout",
            },
        )
        self._abort(execution, "task_timeout")
        # the abandoned task's robot returns to the idle pool and may pick up
        # parked work; a robot busy with some other plan's task is untouched
        agent = self.agents.get(robot_id)
        if agent is not None and attempt is not None and agent.busy_conversation == attempt:
            agent.busy_conversation = None
            self._note_robot_free(agent)

    def _abort(self, execution: PlanExecution, reason: str) -> None:
        self._cancel_deadline(execution)
        self.executions.pop(execution.conversation_id, None)
        self.bus.send(
            AclMessage(
                Performative.FAILURE,
                self.aid,
                self.rqm_aid,
                execution.conversation_id,
                {
                    "kind": "plan_result",
                    "status": "failed",
                    "reason": reason,
                    "request_id": execution.pv.request_id,
                },
            )
        )

    def on_task_timeout(self, task_conv: str) -> None:
        execution = self._live_execution(task_conv)
        if execution is None:
            return
        self._feedback_wave(execution, "timeout")

    def _live_execution(self, task_conv: str) -> Optional[PlanExecution]:
        """Resolve a task conversation to its plan, dropping stale attempts."""
        plan_conv = self._task_conversations.get(task_conv)
        execution = self.executions.get(plan_conv) if plan_conv else None
        if execution is None or execution.inflight_conv != task_conv:
            return None
        return execution

    def _abort_inflight_for_robot(self, robot_id: RobotId) -> None:
        agent = self.agents[robot_id]
        conv = agent.busy_conversation
        agent.busy_conversation = None
        plan_conv = self._task_conversations.get(conv) if conv else None
        execution = self.executions.get(plan_conv) if plan_conv else None
        if execution is not None:
            self._abort(execution, "robot_gone")

    # -- robot side -----------------------------------------------------------------

    def _robot_on_message(self, robot_id: RobotId, msg: AclMessage) -> None:
        if msg.content_kind != "task_assignment":
            logger.warning("robot %s ignoring unexpected %s message", robot_id, msg.content_kind)
            return
        agent = self.agents[robot_id]
        if agent.busy:
            self.bus.send(
                AclMessage(
                    Performative.REFUSE,
                    agent.aid,
                    msg.sender,
                    msg.conversation_id,
                    {"kind": "task_refused", "task_id": msg.content["task_id"], "reason": "busy"},
                )
            )
            return
        agent.busy_conversation = msg.conversation_id
        self._set_robot_state(agent, Lifecycle.CONTROLLED)
        self.bus.send(
            AclMessage(
                Performative.AGREE,
                agent.aid,
                msg.sender,
                msg.conversation_id,
                {"kind": "task_accepted", "task_id": msg.content["task_id"]},
            )
        )
        roll = self.fault_stream.random()
        if roll < agent.stall_probability:
            return  # stalled: no feedback will ever come
        will_fail = roll < agent.stall_probability + agent.fail_probability
        duration = self.task_duration_ms
        if self.task_jitter_ms > 0:
            duration += self.jitter_stream.uniform_int(-self.task_jitter_ms, self.task_jitter_ms)
        duration = max(1, duration)
        conv = msg.conversation_id
        # The completion instant IS the feedback emission, so it carries the
        # message event class: feedback landing exactly on the deadline tick
        # beats the deadline timer.
        self.bus.scheduler.schedule_in(
            duration,
            events.MESSAGE,
            lambda: self._robot_finish(robot_id, conv, will_fail),
            label=f"work {conv}",
        )

    def _robot_finish(self, robot_id: RobotId, conv: str, failed: bool) -> None:
        agent = self.agents[robot_id]
        if agent.busy_conversation != conv:
            return  # task was abandoned (deadline fired); stale completion
        agent.busy_conversation = None
        performative = Performative.FAILURE if failed else Performative.INFORM
        status = "failed" if failed else "success"
        self.bus.send(
            AclMessage(
                performative,
                agent.aid,
                self.aid,
                conv,
                {"kind": "task_result", "status": status},
            )
        )
        self._note_robot_free(agent)

    # -- feedback plumbing ---------------------------------------------------------

    def _on_task_accepted(self, msg: AclMessage) -> None:
        execution = self._live_execution(msg.conversation_id)
        if execution is None:
            return
        task_id, robot_id = execution.current
        self.tap.emit(
            self.bus.scheduler.now,
            tracelog.TASK_ASSIGNED,
            {"request_id": execution.pv.request_id, "task_id": task_id, "robot_id": robot_id},
        )

    def _on_task_reply(self, msg: AclMessage) -> None:
        execution = self._live_execution(msg.conversation_id)
        if execution is None:
            logger.info("stale task reply on %s ignored", msg.conversation_id)
            return
        if msg.content_kind == "task_refused":
            self._feedback_wave(execution, "refused")
        elif msg.content.get("status") == "success":
            self._feedback_wave(execution, "ok")
        else:
            self._feedback_wave(execution, "failed")

    def _note_robot_free(self, agent: RobotAgent) -> None:
        if agent.robot_id in self.pending_deregistration:
            self._apply_deregistration(agent)
            return
        self._set_robot_state(agent, Lifecycle.UNCONTROLLED)
        # Drain parked work on a same-tick timer so the plan that just
        # finished a task gets first claim on the robot for its next one.
        robot_id = agent.robot_id
        self.bus.scheduler.schedule_in(
            0, events.TIMER, lambda: self._drain_parked(robot_id), label=f"drain {robot_id}"
        )

    def _drain_parked(self, robot_id: RobotId) -> None:
        queue = self.parked.get(robot_id)
        if not queue:
            return
        agent = self.agents.get(robot_id)
        record = self.kb.robots.get(robot_id)
        if agent is None or record is None or not record.registered or agent.busy:
            return
        plan_conv = queue.popleft()
        execution = self.executions.get(plan_conv)
        if execution is None:
            return
        execution.parked_on = None
        self._dispatch_wave(execution)

    def _fail_parked_plans(self, robot_id: RobotId) -> None:
        queue = self.parked.pop(robot_id, None)
        if not queue:
            return
        for plan_conv in queue:
            execution = self.executions.get(plan_conv)
            if execution is not None:
                execution.parked_on = None
                self._abort(execution, "robot_gone")

    def _cancel_deadline(self, execution: PlanExecution) -> None:
        if execution.deadline is not None:
            self.bus.scheduler.cancel(execution.deadline)
            execution.deadline = None
