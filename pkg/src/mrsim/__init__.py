"""Deterministic multi-robot orchestration simulator.

A Requests Manager, Planner, and Robots Manager exchange ACL-style messages
to turn incoming requests into capability-matched, load-balanced, sequentially
executed task plans over a churning robot fleet. Controller decision logic is
expressed as declarative process graphs run by a small gateway-aware engine,
and every run produces a replayable trace plus a full performance-metric
suite.
"""

__version__ = "0.1.0"

from mrsim.domain import (
    PlanBlueprint,
    Request,
    RequestOutcome,
    RequestStatus,
    FailureReason,
    Task,
    VerifiedPlan,
    robot_can_perform,
    validate_blueprint,
)

__all__ = [
    "PlanBlueprint",
    "Request",
    "RequestOutcome",
    "RequestStatus",
    "FailureReason",
    "Task",
    "VerifiedPlan",
    "robot_can_perform",
    "validate_blueprint",
]
