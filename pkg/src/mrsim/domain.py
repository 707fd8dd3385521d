"""Core value types shared by every component, plus pure predicates on them.

Identifiers (capabilities, tasks, blueprints, requests, robots) are
case-sensitive opaque strings compared by exact equality. All simulation
times are integer milliseconds.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Optional

CapabilityId = str
RobotId = str


@dataclass(frozen=True)
class Task:
    """A unit of work defined by the capability set required to perform it."""

    id: str
    required: frozenset[CapabilityId]

    def __init__(self, id: str, required: Iterable[CapabilityId]):
        object.__setattr__(self, "id", id)
        object.__setattr__(self, "required", frozenset(required))


@dataclass(frozen=True)
class PlanBlueprint:
    """An ordered task sequence that fulfills one request kind."""

    id: str
    request_kind: str
    tasks: tuple[Task, ...]

    def __init__(self, id: str, request_kind: str, tasks: Iterable[Task]):
        object.__setattr__(self, "id", id)
        object.__setattr__(self, "request_kind", request_kind)
        object.__setattr__(self, "tasks", tuple(tasks))


@dataclass(frozen=True)
class Request:
    """An incoming request, matched to a blueprint by its kind."""

    id: str
    kind: str
    arrival_t_ms: int


@dataclass(frozen=True)
class VerifiedPlan:
    """A blueprint instance with every task bound to a concrete robot.

    Assignments preserve blueprint task order.
    """

    blueprint_id: str
    request_id: str
    assignments: tuple[tuple[str, RobotId], ...]

    def __init__(
        self,
        blueprint_id: str,
        request_id: str,
        assignments: Iterable[tuple[str, RobotId]],
    ):
        object.__setattr__(self, "blueprint_id", blueprint_id)
        object.__setattr__(self, "request_id", request_id)
        object.__setattr__(self, "assignments", tuple(tuple(a) for a in assignments))


class RequestStatus(str, Enum):
    SUCCESS = "success"
    FAILED = "failed"


class FailureReason(str, Enum):
    NO_BLUEPRINT = "no_blueprint"
    INSUFFICIENT_ROBOTS = "insufficient_robots"
    CAPABILITY_MISMATCH = "capability_mismatch"
    PLAN_TIMEOUT = "plan_timeout"
    TASK_TIMEOUT = "task_timeout"
    TASK_FAILED = "task_failed"


@dataclass(frozen=True)
class RequestOutcome:
    """Terminal verdict for one request. failure_reason is present iff failed."""

    request_id: str
    status: RequestStatus
    completion_t_ms: int
    failure_reason: Optional[FailureReason] = None

    def __post_init__(self):
        if (self.status is RequestStatus.FAILED) != (self.failure_reason is not None):
            raise ValueError("failure_reason must be present exactly when status is FAILED")


def robot_can_perform(capabilities: Iterable[CapabilityId], task: Task) -> bool:
    """True iff the robot owns every capability the task requires."""
    return task.required.issubset(capabilities)


def validate_blueprint(pb: PlanBlueprint) -> list[str]:
    """Return every invariant violation of a blueprint (empty list means valid)."""
    violations: list[str] = []
    if not pb.id or not pb.id.strip():
        violations.append("blueprint id is empty")
    if not pb.request_kind or not pb.request_kind.strip():
        violations.append("request kind is empty")
    if len(pb.tasks) == 0:
        violations.append("empty task list")
    seen: set[str] = set()
    for task in pb.tasks:
        if not task.id or not task.id.strip():
            violations.append("task with empty id")
        elif task.id in seen:
            violations.append(f"duplicate task id {task.id!r}")
        else:
            seen.add(task.id)
        if len(task.required) == 0:
            violations.append(f"task {task.id!r} has an empty required capability set")
        for cap in task.required:
            if not cap or not cap.strip():
                violations.append(f"task {task.id!r} has an empty capability token")
    return violations
