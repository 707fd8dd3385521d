"""Scenario configuration: the complete description of one simulation run.

Loaded from a YAML document (JSON is accepted too) and validated before any
event runs. The default scenario runs the three-robot fleet for 30 minutes
with one generated request and one churn tick per minute.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from mrsim.domain import PlanBlueprint, Task, validate_blueprint
from mrsim.knowledge_base import DEFAULT_MAX_ROBOTS


class ScenarioError(Exception):
    def __init__(self, problems: list[str]):
        super().__init__("; ".join(problems))
        self.problems = problems


@dataclass
class RobotSpec:
    robot_id: str
    capabilities: tuple[str, ...]
    registered: bool = True
    tasks_completed: int = 0  # seeded history, e.g. for showcase fixtures


@dataclass
class FaultSpec:
    stall_probability: float = 0.0
    fail_probability: float = 0.0


@dataclass
class ScenarioConfig:
    duration_min: int = 30
    request_period_s: int = 60
    churn_period_s: int = 60  # 0 disables churn
    sample_interval_s: int = 60
    seed: int = 42
    max_robots: int = DEFAULT_MAX_ROBOTS
    plan_timeout_s: int = 30
    exec_timeout_s: int = 300
    task_timeout_s: int = 60
    task_duration_s: int = 20
    task_jitter_s: int = 0
    message_latency_ms: int = 0
    defer_busy_deregistration: bool = True
    robots: list[RobotSpec] = field(default_factory=list)
    blueprints: list[PlanBlueprint] = field(default_factory=list)
    request_kind_weights: dict[str, float] = field(default_factory=dict)
    fault_injection: dict[str, FaultSpec] = field(default_factory=dict)

    # -- derived ---------------------------------------------------------------

    @property
    def duration_ms(self) -> int:
        return self.duration_min * 60_000

    @property
    def request_period_ms(self) -> int:
        return self.request_period_s * 1000

    @property
    def churn_period_ms(self) -> int:
        return self.churn_period_s * 1000

    @property
    def sample_interval_ms(self) -> int:
        return self.sample_interval_s * 1000

    def validate(self) -> list[str]:
        problems: list[str] = []
        if self.duration_min <= 0:
            problems.append("duration must be positive")
        if self.request_period_s <= 0:
            problems.append("request period must be positive")
        if self.churn_period_s < 0:
            problems.append("churn period must be zero (disabled) or positive")
        if self.sample_interval_s <= 0:
            problems.append("sample interval must be positive")
        if self.max_robots < 1:
            problems.append("max_robots must be at least 1")
        for name, value in (
            ("plan timeout", self.plan_timeout_s),
            ("execution timeout", self.exec_timeout_s),
            ("task timeout", self.task_timeout_s),
            ("task duration", self.task_duration_s),
        ):
            if value <= 0:
                problems.append(f"{name} must be positive")
        if self.task_jitter_s < 0:
            problems.append("task jitter must be non-negative")
        if self.task_jitter_s >= self.task_duration_s and self.task_jitter_s > 0:
            problems.append("task jitter must be smaller than the task duration")
        if self.message_latency_ms < 0:
            problems.append("message latency must be non-negative")

        seen_robots: set[str] = set()
        initially_registered = 0
        for spec in self.robots:
            if spec.robot_id in seen_robots:
                problems.append(f"duplicate robot id {spec.robot_id!r}")
            seen_robots.add(spec.robot_id)
            if not spec.capabilities:
                problems.append(f"robot {spec.robot_id!r} has no capabilities")
            if spec.tasks_completed < 0:
                problems.append(f"robot {spec.robot_id!r} has a negative task history")
            if spec.registered:
                initially_registered += 1
        if initially_registered > self.max_robots:
            problems.append(
                f"{initially_registered} robots initially registered exceeds max_robots={self.max_robots}"
            )

        seen_kinds: set[str] = set()
        for pb in self.blueprints:
            for violation in validate_blueprint(pb):
                problems.append(f"blueprint {pb.id!r}: {violation}")
            if pb.request_kind in seen_kinds:
                problems.append(f"two blueprints serve request kind {pb.request_kind!r}")
            seen_kinds.add(pb.request_kind)

        # an empty weight map disables generation (operator-driven runs)
        if self.request_kind_weights:
            total = 0.0
            for kind, weight in self.request_kind_weights.items():
                if weight < 0:
                    problems.append(f"request kind {kind!r} has a negative weight")
                total += weight
            if total <= 0:
                problems.append("request kind weights must sum to a positive value")

        for robot_id, fault in self.fault_injection.items():
            if robot_id not in seen_robots:
                problems.append(f"fault injection names unknown robot {robot_id!r}")
            if not 0.0 <= fault.stall_probability <= 1.0:
                problems.append(f"stall probability for {robot_id!r} out of [0,1]")
            if not 0.0 <= fault.fail_probability <= 1.0:
                problems.append(f"fail probability for {robot_id!r} out of [0,1]")
            if fault.stall_probability + fault.fail_probability > 1.0:
                problems.append(f"stall+fail probability for {robot_id!r} exceeds 1")
        return problems

    # -- (de)serialization -------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "duration_min": self.duration_min,
            "request_period_s": self.request_period_s,
            "churn_period_s": self.churn_period_s,
            "sample_interval_s": self.sample_interval_s,
            "seed": self.seed,
            "max_robots": self.max_robots,
            "plan_timeout_s": self.plan_timeout_s,
            "exec_timeout_s": self.exec_timeout_s,
            "task_timeout_s": self.task_timeout_s,
            "task_duration_s": self.task_duration_s,
            "task_jitter_s": self.task_jitter_s,
            "message_latency_ms": self.message_latency_ms,
            "defer_busy_deregistration": self.defer_busy_deregistration,
            "robots": [
                {
                    "id": spec.robot_id,
                    "capabilities": list(spec.capabilities),
                    "registered": spec.registered,
                    "tasks_completed": spec.tasks_completed,
                }
                for spec in self.robots
            ],
            "blueprints": [
                {
                    "id": pb.id,
                    "kind": pb.request_kind,
                    "tasks": [{"id": t.id, "required": sorted(t.required)} for t in pb.tasks],
                }
                for pb in self.blueprints
            ],
            "request_kind_weights": dict(self.request_kind_weights),
            "fault_injection": {
                robot_id: {"stall": fault.stall_probability, "fail": fault.fail_probability}
                for robot_id, fault in self.fault_injection.items()
            },
        }

    def digest(self) -> str:
        canonical = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:16]

    @classmethod
    def from_dict(cls, raw: dict) -> "ScenarioConfig":
        problems: list[str] = []
        if not isinstance(raw, dict):
            raise ScenarioError(["scenario document root must be a mapping"])
        known = {
            "duration_min",
            "request_period_s",
            "churn_period_s",
            "sample_interval_s",
            "seed",
            "max_robots",
            "plan_timeout_s",
            "exec_timeout_s",
            "task_timeout_s",
            "task_duration_s",
            "task_jitter_s",
            "message_latency_ms",
            "defer_busy_deregistration",
            "robots",
            "blueprints",
            "request_kind_weights",
            "fault_injection",
        }
        for key in raw:
            if key not in known:
                problems.append(f"unknown scenario key {key!r}")

        robots = []
        for entry in raw.get("robots", []):
            try:
                robots.append(
                    RobotSpec(
                        robot_id=str(entry["id"]),
                        capabilities=tuple(str(c) for c in entry["capabilities"]),
                        registered=bool(entry.get("registered", True)),
                        tasks_completed=int(entry.get("tasks_completed", 0)),
                    )
                )
            except (KeyError, TypeError, ValueError):
                problems.append(f"malformed robot entry: {entry!r}")

        blueprints = []
        for entry in raw.get("blueprints", []):
            try:
                blueprints.append(
                    PlanBlueprint(
                        str(entry["id"]),
                        str(entry["kind"]),
                        [Task(str(t["id"]), [str(c) for c in t["required"]]) for t in entry["tasks"]],
                    )
                )
            except (KeyError, TypeError):
                problems.append(f"malformed blueprint entry: {entry!r}")

        faults = {}
        for robot_id, entry in (raw.get("fault_injection") or {}).items():
            try:
                faults[str(robot_id)] = FaultSpec(
                    stall_probability=float(entry.get("stall", 0.0)),
                    fail_probability=float(entry.get("fail", 0.0)),
                )
            except (TypeError, ValueError, AttributeError):
                problems.append(f"malformed fault entry for {robot_id!r}: {entry!r}")

        if problems:
            raise ScenarioError(problems)

        defaults = cls()
        config = cls(
            duration_min=int(raw.get("duration_min", defaults.duration_min)),
            request_period_s=int(raw.get("request_period_s", defaults.request_period_s)),
            churn_period_s=int(raw.get("churn_period_s", defaults.churn_period_s)),
            sample_interval_s=int(raw.get("sample_interval_s", defaults.sample_interval_s)),
            seed=int(raw.get("seed", defaults.seed)),
            max_robots=int(raw.get("max_robots", defaults.max_robots)),
            plan_timeout_s=int(raw.get("plan_timeout_s", defaults.plan_timeout_s)),
            exec_timeout_s=int(raw.get("exec_timeout_s", defaults.exec_timeout_s)),
            task_timeout_s=int(raw.get("task_timeout_s", defaults.task_timeout_s)),
            task_duration_s=int(raw.get("task_duration_s", defaults.task_duration_s)),
            task_jitter_s=int(raw.get("task_jitter_s", defaults.task_jitter_s)),
            message_latency_ms=int(raw.get("message_latency_ms", defaults.message_latency_ms)),
            defer_busy_deregistration=bool(
                raw.get("defer_busy_deregistration", defaults.defer_busy_deregistration)
            ),
            robots=robots,
            blueprints=blueprints,
            request_kind_weights={
                str(k): float(v) for k, v in (raw.get("request_kind_weights") or {}).items()
            },
            fault_injection=faults,
        )
        problems = config.validate()
        if problems:
            raise ScenarioError(problems)
        return config


def load_scenario(path: str | Path) -> ScenarioConfig:
    text = Path(path).read_text("utf-8")
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ScenarioError([f"scenario file is not well-formed YAML: {exc}"]) from exc
    return ScenarioConfig.from_dict(raw or {})


def default_config(seed: int = 42) -> ScenarioConfig:
    """Three-robot fleet, 30-minute run, per-minute requests and churn.

    The stocked blueprints cover the interesting planner paths: a two-step
    plan, the three-step capability-matching showcase plan, and a plan whose
    capability nobody owns; one weighted request kind has no blueprint at all.
    """
    config = ScenarioConfig(
        seed=seed,
        robots=[
            RobotSpec("R1", ("C1", "C2", "C3", "C4"), registered=True),
            RobotSpec("R2", ("C2", "C4", "C5"), registered=False),
            RobotSpec("R3", ("C2", "C5"), registered=True),
        ],
        blueprints=[
            PlanBlueprint("Pb1", "Rq1", [Task("T4", ["C2"]), Task("T5", ["C2"])]),
            PlanBlueprint(
                "Pb2",
                "Rq2",
                [Task("T1", ["C1", "C3", "C4"]), Task("T2", ["C2"]), Task("T3", ["C2", "C5"])],
            ),
            PlanBlueprint("Pb3", "Rq3", [Task("T6", ["C9"])]),
        ],
        request_kind_weights={"Rq1": 6.0, "Rq2": 2.0, "Rq3": 1.0, "Rq4": 1.0},
    )
    problems = config.validate()
    if problems:  # pragma: no cover - defaults must stay valid
        raise ScenarioError(problems)
    return config
