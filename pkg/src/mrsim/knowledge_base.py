"""Blueprint store and robot registry.

Holds one plan blueprint per request kind and a record per known robot:
capability set, lifecycle state, and completed-task history. The registered
fleet is capped at max_robots (default 3). Capability sets only change via
deregister/register.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Optional

from mrsim.domain import (
    CapabilityId,
    PlanBlueprint,
    RobotId,
    Task,
    robot_can_perform,
    validate_blueprint,
)

DEFAULT_MAX_ROBOTS = 3


class Lifecycle(str, Enum):
    UNREGISTERED = "unregistered"
    UNCONTROLLED = "uncontrolled"
    CONTROLLED = "controlled"


class KnowledgeBaseError(Exception):
    pass


class InvalidBlueprintError(KnowledgeBaseError):
    def __init__(self, violations: list[str]):
        super().__init__("; ".join(violations))
        self.violations = violations


class CapacityError(KnowledgeBaseError):
    pass


@dataclass
class RobotRecord:
    robot_id: RobotId
    capabilities: frozenset[CapabilityId]
    lifecycle: Lifecycle = Lifecycle.UNREGISTERED
    tasks_completed: int = 0

    @property
    def registered(self) -> bool:
        return self.lifecycle is not Lifecycle.UNREGISTERED


@dataclass(frozen=True)
class RobotSnapshot:
    """Immutable registry view handed to the planner."""

    robot_id: RobotId
    capabilities: frozenset[CapabilityId]
    tasks_completed: int


class KnowledgeBase:
    def __init__(self, max_robots: int = DEFAULT_MAX_ROBOTS):
        if max_robots < 1:
            raise ValueError("max_robots must be positive")
        self.max_robots = max_robots
        self.blueprints: dict[str, PlanBlueprint] = {}
        self.robots: dict[RobotId, RobotRecord] = {}

    # -- blueprints ----------------------------------------------------------

    def find_blueprint(self, kind: str) -> Optional[PlanBlueprint]:
        return self.blueprints.get(kind)

    def upsert_blueprint(self, pb: PlanBlueprint) -> None:
        violations = validate_blueprint(pb)
        if violations:
            raise InvalidBlueprintError(violations)
        self.blueprints[pb.request_kind] = pb

    def remove_blueprint(self, kind: str) -> bool:
        """Remove and report whether anything was stored for the kind."""
        return self.blueprints.pop(kind, None) is not None

    # -- robot registry ------------------------------------------------------

    def registered_ids(self) -> list[RobotId]:
        return sorted(r.robot_id for r in self.robots.values() if r.registered)

    def registered_count(self) -> int:
        return sum(1 for r in self.robots.values() if r.registered)

    def register_robot(self, robot_id: RobotId, capabilities: Iterable[CapabilityId]) -> RobotRecord:
        record = self.robots.get(robot_id)
        if record is not None and record.registered:
            raise KnowledgeBaseError(f"robot {robot_id!r} is already registered")
        if self.registered_count() >= self.max_robots:
            raise CapacityError(
                f"fleet is at capacity ({self.max_robots}); {robot_id!r} cannot register"
            )
        caps = frozenset(capabilities)
        if not caps:
            raise KnowledgeBaseError(f"robot {robot_id!r} must register with at least one capability")
        if record is None:
            record = RobotRecord(robot_id, caps)
            self.robots[robot_id] = record
        record.capabilities = caps
        record.lifecycle = Lifecycle.UNCONTROLLED
        return record

    def deregister_robot(self, robot_id: RobotId) -> RobotRecord:
        record = self.robots.get(robot_id)
        if record is None or not record.registered:
            raise KnowledgeBaseError(f"robot {robot_id!r} is not registered")
        record.lifecycle = Lifecycle.UNREGISTERED
        return record

    def set_busy(self, robot_id: RobotId, busy: bool) -> None:
        record = self.robots[robot_id]
        if not record.registered:
            raise KnowledgeBaseError(f"robot {robot_id!r} is not registered")
        record.lifecycle = Lifecycle.CONTROLLED if busy else Lifecycle.UNCONTROLLED

    def capable_robots(self, task: Task) -> list[RobotId]:
        """Registered robots (busy or idle) able to perform the task, ordered by id."""
        return sorted(
            r.robot_id
            for r in self.robots.values()
            if r.registered and robot_can_perform(r.capabilities, task)
        )

    def increment_history(self, robot_id: RobotId) -> int:
        record = self.robots.get(robot_id)
        if record is None:
            raise KnowledgeBaseError(f"unknown robot {robot_id!r}")
        record.tasks_completed += 1
        return record.tasks_completed

    def planning_snapshot(self) -> list[RobotSnapshot]:
        """Registered fleet as the planner sees it, ordered by robot id."""
        return [
            RobotSnapshot(r.robot_id, r.capabilities, r.tasks_completed)
            for r in sorted(self.robots.values(), key=lambda rec: rec.robot_id)
            if r.registered
        ]
