"""Deterministic scenario runner.

Wires the bus, knowledge base, controllers, robot fleet, and metric
collector onto a single event loop, then drives the scenario shape: one
generated request per request period, one random deregistration plus one
random registration per churn period, and one metric row per sampling
interval. Identical (config, seed) pairs produce byte-identical traces.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable, Optional

from mrsim import events, tracelog
from mrsim.bus import AclMessage, MessageBus, Performative
from mrsim.knowledge_base import KnowledgeBase, Lifecycle
from mrsim.metrics import InvariantViolation, MetricsCollector, RobotReport, SystemSeriesRow
from mrsim.planner import PlannerAgent
from mrsim.requests_manager import RequestsManager
from mrsim.rng import derive_stream
from mrsim.robots_manager import RobotsManager
from mrsim.scenario import ScenarioConfig, ScenarioError
from mrsim.tracelog import EventTap, TraceLog

logger = logging.getLogger(__name__)

GENERATOR_NAME = "GEN"
OPERATOR_NAME = "OPERATOR"


@dataclass
class SimulationOutput:
    series_rows: list[SystemSeriesRow]
    robot_reports: list[RobotReport]
    trace: TraceLog
    outcomes: list[dict]

    @property
    def trace_jsonl(self) -> str:
        return self.trace.to_jsonl()


class Simulation:
    """One scenario instance. Single-threaded; external callers must hand
    commands to the loop thread (see the service module)."""

    def __init__(self, config: ScenarioConfig, check_invariants: bool = True):
        problems = config.validate()
        if problems:
            raise ScenarioError(problems)
        self.config = config
        self.check_invariants = check_invariants
        self.scheduler = events.Scheduler()
        self.trace = TraceLog()
        self.tap = EventTap(self.trace)
        self.bus = MessageBus(self.scheduler, self.trace, config.message_latency_ms)
        self.kb = KnowledgeBase(config.max_robots)
        self.collector = MetricsCollector()
        self.tap.subscribe(self.collector.on_event)

        self._arrival_stream = derive_stream(config.seed, "arrivals")
        self._churn_stream = derive_stream(config.seed, "churn")
        self._jitter_stream = derive_stream(config.seed, "jitter")
        self._fault_stream = derive_stream(config.seed, "faults")

        self.rqm = RequestsManager(
            self.bus,
            self.kb,
            self.tap,
            plan_timeout_ms=config.plan_timeout_s * 1000,
            exec_timeout_ms=config.exec_timeout_s * 1000,
        )
        self.pln = PlannerAgent(self.bus, self.kb, self.tap)
        self.rbm = RobotsManager(
            self.bus,
            self.kb,
            self.tap,
            fault_stream=self._fault_stream,
            jitter_stream=self._jitter_stream,
            task_duration_ms=config.task_duration_s * 1000,
            task_jitter_ms=config.task_jitter_s * 1000,
            task_timeout_ms=config.task_timeout_s * 1000,
            defer_busy_deregistration=config.defer_busy_deregistration,
        )
        self.generator_aid = self.bus.register_agent(GENERATOR_NAME, handler=lambda msg: None)
        self.operator_aid = self.bus.register_agent(OPERATOR_NAME, handler=lambda msg: None)

        self.series_rows: list[SystemSeriesRow] = []
        self.row_hook: Optional[Callable[[SystemSeriesRow], None]] = None
        self._request_counter = 0
        self._churn_counter = 0
        self._finished = False

        self._seed_world()
        self._schedule_drivers()

    # -- construction -------------------------------------------------------------

    def _seed_world(self) -> None:
        from mrsim.knowledge_base import RobotRecord

        for pb in self.config.blueprints:
            self.kb.upsert_blueprint(pb)
        for spec in self.config.robots:
            fault = self.config.fault_injection.get(spec.robot_id)
            agent = self.rbm.add_robot(
                spec.robot_id,
                spec.capabilities,
                stall_probability=fault.stall_probability if fault else 0.0,
                fail_probability=fault.fail_probability if fault else 0.0,
            )
            self.kb.robots[spec.robot_id] = RobotRecord(
                spec.robot_id,
                frozenset(spec.capabilities),
                Lifecycle.UNREGISTERED,
                tasks_completed=spec.tasks_completed,
            )
            self.collector.track_robot(
                spec.robot_id, agent.times.created_at, tasks_completed=spec.tasks_completed
            )
        self.trace.write_header(
            {
                "seed": self.config.seed,
                "scenario_digest": self.config.digest(),
                "duration_ms": self.config.duration_ms,
                "sample_interval_ms": self.config.sample_interval_ms,
                "robots": [
                    {"robot_id": spec.robot_id, "created_at": 0, "tasks_completed": spec.tasks_completed}
                    for spec in self.config.robots
                ],
            }
        )
        for spec in self.config.robots:
            if spec.registered:
                self.rbm.handle_registration(spec.robot_id, spec.capabilities)

    def _schedule_drivers(self) -> None:
        duration = self.config.duration_ms
        period = self.config.request_period_ms
        if self.config.request_kind_weights:
            for t in range(0, duration, period):
                self.scheduler.schedule(t, events.TIMER, self._generate_request, "request arrival")
        if self.config.churn_period_ms > 0:
            churn = self.config.churn_period_ms
            for t in range(churn, duration + 1, churn):
                self.scheduler.schedule(t, events.TIMER, self._churn_tick, "churn tick")
        interval = self.config.sample_interval_ms
        for t in range(interval, duration + 1, interval):
            self.scheduler.schedule(t, events.SAMPLE, self._sample, "metric sample")

    # -- drivers -------------------------------------------------------------------

    def _pick_kind(self) -> str:
        kinds = sorted(self.config.request_kind_weights)
        total = sum(self.config.request_kind_weights[k] for k in kinds)
        roll = self._arrival_stream.random() * total
        cumulative = 0.0
        for kind in kinds:
            cumulative += self.config.request_kind_weights[kind]
            if roll < cumulative:
                return kind
        return kinds[-1]

    def _generate_request(self) -> None:
        self._request_counter += 1
        request_id = f"rq-{self._request_counter}"
        kind = self._pick_kind()
        self.bus.send(
            AclMessage(
                Performative.REQUEST,
                self.generator_aid,
                self.rqm.aid,
                request_id,
                {"kind": "request", "id": request_id, "request_kind": kind},
            )
        )

    def _churn_tick(self) -> None:
        """One random registered robot leaves, one random unregistered robot joins.

        Pools are computed before either change, so the joining robot is never
        the one that just left. An empty pool skips that half; a registration
        blocked by a deferred departure still holding a fleet slot is skipped
        too (the Robots Manager refuses it).
        """
        departures = [
            robot_id
            for robot_id in self.kb.registered_ids()
            if robot_id not in self.rbm.pending_deregistration
        ]
        arrivals = sorted(
            agent.robot_id
            for agent in self.rbm.agents.values()
            if agent.times.state is Lifecycle.UNREGISTERED
        )
        if departures:
            robot_id = self._churn_stream.choice(departures)
            self._send_registry_command({"op": "deregister", "robot_id": robot_id})
        if arrivals:
            robot_id = self._churn_stream.choice(arrivals)
            agent = self.rbm.agents[robot_id]
            self._send_registry_command(
                {
                    "op": "register",
                    "robot_id": robot_id,
                    "capabilities": sorted(agent.capabilities),
                }
            )

    def _send_registry_command(self, payload: dict) -> None:
        self._churn_counter += 1
        self.bus.send(
            AclMessage(
                Performative.REQUEST,
                self.generator_aid,
                self.rbm.aid,
                f"churn-{self._churn_counter}",
                {"kind": "registry_command", **payload},
            )
        )

    def _sample(self) -> None:
        row = self.collector.system_snapshot(self.scheduler.now)
        self.series_rows.append(row)
        if self.row_hook is not None:
            self.row_hook(row)

    # -- invariants ------------------------------------------------------------------

    def probe(self) -> None:
        """Cross-module invariant checks, run after every event when enabled."""
        now = self.scheduler.now
        if self.kb.registered_count() > self.kb.max_robots:
            raise InvariantViolation(
                f"registered fleet {self.kb.registered_count()} exceeds {self.kb.max_robots}"
            )
        counts = self.rqm.counts()
        if counts["processed"] + counts["unprocessed"] != counts["received"]:
            raise InvariantViolation("request counters do not conserve")
        for agent in self.rbm.agents.values():
            snap = agent.times.snapshot(now)
            if snap["t_c"] + snap["t_unc"] != snap["t_r"]:
                raise InvariantViolation(f"{agent.robot_id}: t_c + t_unc != t_r")
            if snap["t_r"] + snap["t_unr"] != snap["t_ov"]:
                raise InvariantViolation(f"{agent.robot_id}: t_r + t_unr != t_ov")
            if snap["t_ov"] != now - agent.times.created_at:
                raise InvariantViolation(f"{agent.robot_id}: t_ov is not now - created_at")
            mirror = self.collector.robot_report(agent.robot_id, now)
            if (mirror.t_c_ms, mirror.t_unc_ms, mirror.t_unr_ms) != (
                snap["t_c"],
                snap["t_unc"],
                snap["t_unr"],
            ):
                raise InvariantViolation(
                    f"{agent.robot_id}: metric timeline diverged from robot accounting"
                )

    # -- execution ----------------------------------------------------------------------

    @property
    def now(self) -> int:
        return self.scheduler.now

    def process_until(self, t_ms: int) -> None:
        after_each = self.probe if self.check_invariants else None
        self.scheduler.run_until(min(t_ms, self.config.duration_ms), after_each=after_each)

    def run_to_end(self) -> SimulationOutput:
        self.process_until(self.config.duration_ms)
        return self.finish()

    def finish(self) -> SimulationOutput:
        if self._finished:
            raise RuntimeError("simulation already finished")
        self._finished = True
        end = self.config.duration_ms
        self.trace.write_end(end)
        reports = self.collector.all_robot_reports(end)
        return SimulationOutput(self.series_rows, reports, self.trace, list(self.collector.outcomes))


def run(config: ScenarioConfig, seed: Optional[int] = None, check_invariants: bool = True) -> SimulationOutput:
    """Run a scenario to completion; ``seed`` overrides the config's seed."""
    if seed is not None:
        import dataclasses

        config = dataclasses.replace(config, seed=seed)
    return Simulation(config, check_invariants=check_invariants).run_to_end()
