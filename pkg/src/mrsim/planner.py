"""Planner: turns a blueprint into a verified plan.

Planning needs at least two registered robots; every task is matched against
robot capabilities in blueprint order and assigned to the capable robot with
the smallest effective history (completed tasks plus tentative assignments
already made within this plan), ties broken by lexicographically smallest
robot id.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional, Sequence, Union

from mrsim import tracelog
from mrsim.bus import AclMessage, AgentId, MessageBus, Performative
from mrsim.domain import FailureReason, PlanBlueprint, RobotId, Task, VerifiedPlan, robot_can_perform
from mrsim.knowledge_base import KnowledgeBase, RobotSnapshot
from mrsim.tracelog import EventTap
from mrsim.workflow import ProcessDefinition, ProcessInstance, load_controller_process, run_to_quiescence

logger = logging.getLogger(__name__)

MIN_FLEET_FOR_PLANNING = 2


@dataclass(frozen=True)
class PlanFailure:
    reason: FailureReason  # INSUFFICIENT_ROBOTS or CAPABILITY_MISMATCH
    task_id: Optional[str] = None

    def __post_init__(self):
        if self.reason is FailureReason.CAPABILITY_MISMATCH and self.task_id is None:
            raise ValueError("capability mismatch must name the offending task")


def select_robot(candidates: Sequence[tuple[RobotId, int]]) -> RobotId:
    """Pick the candidate with the least effective history; ties go to the
    lexicographically smallest robot id."""
    if not candidates:
        raise ValueError("select_robot needs at least one candidate")
    return min(candidates, key=lambda pair: (pair[1], pair[0]))[0]


def build_verified_plan(
    pb: PlanBlueprint,
    snapshot: Sequence[RobotSnapshot],
    request_id: str,
) -> Union[VerifiedPlan, PlanFailure]:
    if len(snapshot) < MIN_FLEET_FOR_PLANNING:
        return PlanFailure(FailureReason.INSUFFICIENT_ROBOTS)
    tentative: dict[RobotId, int] = {robot.robot_id: 0 for robot in snapshot}
    assignments: list[tuple[str, RobotId]] = []
    for task in pb.tasks:
        candidates = [
            (robot.robot_id, robot.tasks_completed + tentative[robot.robot_id])
            for robot in snapshot
            if robot_can_perform(robot.capabilities, task)
        ]
        if not candidates:
            return PlanFailure(FailureReason.CAPABILITY_MISMATCH, task_id=task.id)
        chosen = select_robot(candidates)
        tentative[chosen] += 1
        assignments.append((task.id, chosen))
    return VerifiedPlan(pb.id, request_id, assignments)


class PlannerAgent:
    """Bus-facing planner; decision flow runs on the process engine."""

    name = "PLN"

    def __init__(self, bus: MessageBus, kb: KnowledgeBase, tap: EventTap):
        self.bus = bus
        self.kb = kb
        self.tap = tap
        self.definition: ProcessDefinition = load_controller_process("pln")
        self.aid = bus.register_agent(self.name, handler=self.on_message)
        self.rbm_aid = AgentId("RbM")

    def on_message(self, msg: AclMessage) -> None:
        if msg.content_kind != "plan_request":
            logger.warning("planner ignoring unexpected %s message", msg.content_kind)
            return
        self._plan(msg)

    def _plan(self, msg: AclMessage) -> None:
        content = msg.content
        pb = blueprint_from_payload(content["blueprint"])
        request_id = content["request_id"]
        env: dict[str, bool] = {}
        result: dict = {}

        def snapshot_registry():
            snap = self.kb.planning_snapshot()
            result["snapshot"] = snap
            env["fleet_ok"] = len(snap) >= MIN_FLEET_FOR_PLANNING
            env["fleet_short"] = not env["fleet_ok"]

        def match_tasks():
            outcome = build_verified_plan(pb, result["snapshot"], request_id)
            result["outcome"] = outcome
            env["matched"] = isinstance(outcome, VerifiedPlan)
            env["unmatched"] = not env["matched"]

        def send_verified_plan():
            pv: VerifiedPlan = result["outcome"]
            now = self.bus.scheduler.now
            self.tap.emit(
                now,
                tracelog.PLAN_CREATED,
                {
                    "request_id": request_id,
                    "blueprint_id": pb.id,
                    "assignments": [[t, r] for t, r in pv.assignments],
                    "tasks": blueprint_tasks_payload(pb),
                },
            )
            self.bus.send(
                AclMessage(
                    Performative.REQUEST,
                    self.aid,
                    self.rbm_aid,
                    msg.conversation_id,
                    {"kind": "verified_plan", "plan": verified_plan_payload(pv)},
                )
            )
            self.bus.send(
                AclMessage(
                    Performative.AGREE,
                    self.aid,
                    msg.sender,
                    msg.conversation_id,
                    {
                        "kind": "plan_accepted",
                        "request_id": request_id,
                        "blueprint_id": pb.id,
                        "assignments": [[t, r] for t, r in pv.assignments],
                    },
                )
            )

        def report_insufficient_robots():
            self._report_failure(msg, request_id, FailureReason.INSUFFICIENT_ROBOTS, None)

        def report_capability_mismatch():
            failure: PlanFailure = result["outcome"]
            self._report_failure(msg, request_id, failure.reason, failure.task_id)

        instance = ProcessInstance(self.definition)
        run_to_quiescence(
            instance,
            env,
            {
                "snapshot_registry": snapshot_registry,
                "match_tasks": match_tasks,
                "send_verified_plan": send_verified_plan,
                "report_insufficient_robots": report_insufficient_robots,
                "report_capability_mismatch": report_capability_mismatch,
            },
        )

    def _report_failure(
        self,
        msg: AclMessage,
        request_id: str,
        reason: FailureReason,
        task_id: Optional[str],
    ) -> None:
        now = self.bus.scheduler.now
        payload = {"request_id": request_id, "reason": reason.value}
        if task_id is not None:
            payload["task_id"] = task_id
        self.tap.emit(now, tracelog.PLAN_FAILED, payload)
        self.bus.send(
            AclMessage(
                Performative.FAILURE,
                self.aid,
                msg.sender,
                msg.conversation_id,
                {"kind": "plan_result", "status": "failed", **payload},
            )
        )


# -- wire payload helpers ----------------------------------------------------


def blueprint_payload(pb: PlanBlueprint) -> dict:
    return {
        "id": pb.id,
        "request_kind": pb.request_kind,
        "tasks": blueprint_tasks_payload(pb),
    }


def blueprint_tasks_payload(pb: PlanBlueprint) -> list[dict]:
    return [{"id": t.id, "required": sorted(t.required)} for t in pb.tasks]


def blueprint_from_payload(payload: dict) -> PlanBlueprint:
    return PlanBlueprint(
        payload["id"],
        payload["request_kind"],
        [Task(t["id"], t["required"]) for t in payload["tasks"]],
    )


def verified_plan_payload(pv: VerifiedPlan) -> dict:
    return {
        "blueprint_id": pv.blueprint_id,
        "request_id": pv.request_id,
        "assignments": [[t, r] for t, r in pv.assignments],
    }


def verified_plan_from_payload(payload: dict) -> VerifiedPlan:
    return VerifiedPlan(
        payload["blueprint_id"],
        payload["request_id"],
        [(t, r) for t, r in payload["assignments"]],
    )
