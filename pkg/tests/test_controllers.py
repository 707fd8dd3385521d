"""Requests Manager and Robots Manager behaviour over a hand-driven world."""

import pytest

from mrsim import events, tracelog
from mrsim.bus import AclMessage, MessageBus, Performative
from mrsim.domain import PlanBlueprint, Task
from mrsim.events import Scheduler
from mrsim.knowledge_base import KnowledgeBase, Lifecycle
from mrsim.planner import PlannerAgent
from mrsim.requests_manager import RequestsManager
from mrsim.rng import derive_stream
from mrsim.robots_manager import RobotsManager
from mrsim.tracelog import EventTap, TraceLog

PB2 = PlanBlueprint(
    "Pb2", "Rq2", [Task("T1", ["C1", "C3", "C4"]), Task("T2", ["C2"]), Task("T3", ["C2", "C5"])]
)
PB1 = PlanBlueprint("Pb1", "Rq1", [Task("T4", ["C2"]), Task("T5", ["C2"])])


class World:
    def __init__(self, task_duration_ms=20_000, task_timeout_ms=60_000, defer=True):
        self.scheduler = Scheduler()
        self.trace = TraceLog()
        self.tap = EventTap(self.trace)
        self.bus = MessageBus(self.scheduler, self.trace)
        self.kb = KnowledgeBase()
        self.rqm = RequestsManager(self.bus, self.kb, self.tap)
        self.pln = PlannerAgent(self.bus, self.kb, self.tap)
        self.rbm = RobotsManager(
            self.bus,
            self.kb,
            self.tap,
            fault_stream=derive_stream(1, "faults"),
            jitter_stream=derive_stream(1, "jitter"),
            task_duration_ms=task_duration_ms,
            task_timeout_ms=task_timeout_ms,
            defer_busy_deregistration=defer,
        )
        self.client = self.bus.register_agent("CLIENT", handler=self._collect)
        self.inbox: list[AclMessage] = []

    def _collect(self, msg):
        self.inbox.append(msg)

    def submit(self, request_id, kind):
        self.bus.send(
            AclMessage(
                Performative.REQUEST,
                self.client,
                self.rqm.aid,
                request_id,
                {"kind": "request", "id": request_id, "request_kind": kind},
            )
        )

    def registry(self, op, robot_id, capabilities=None):
        content = {"kind": "registry_command", "op": op, "robot_id": robot_id}
        if capabilities is not None:
            content["capabilities"] = sorted(capabilities)
        self.bus.send(
            AclMessage(
                Performative.REQUEST, self.client, self.rbm.aid, f"reg-{robot_id}-{op}", content
            )
        )

    def run_until(self, t_ms):
        self.scheduler.run_until(t_ms)

    def outcomes(self):
        return [m for m in self.inbox if m.content_kind == "request_outcome"]

    def evts(self, kind):
        return [r for r in self.trace.records if r.get("kind") == "evt" and r["event"] == kind]

    def msgs(self, sender=None, receiver=None, content_kind=None):
        out = []
        for r in self.trace.records:
            if r.get("kind") != "msg":
                continue
            if sender and r["sender"] != sender:
                continue
            if receiver and r["receiver"] != receiver:
                continue
            if content_kind and r["content_kind"] != content_kind:
                continue
            out.append(r)
        return out


@pytest.fixture
def world():
    """The showcase fleet: R1 (history 9) and R3 (history 11)."""
    w = World()
    w.kb.upsert_blueprint(PB2)
    w.kb.upsert_blueprint(PB1)
    w.registry("register", "R1", {"C1", "C2", "C3", "C4"})
    w.registry("register", "R3", {"C2", "C5"})
    w.run_until(0)
    w.kb.robots["R1"].tasks_completed = 9
    w.kb.robots["R3"].tasks_completed = 11
    return w


# ---------------------------------------------------------------------------
# Requests Manager
# ---------------------------------------------------------------------------


def test_request_flows_to_success(world):
    world.submit("rq-1", "Rq2")
    world.run_until(120_000)
    outcomes = world.outcomes()
    assert len(outcomes) == 1
    assert outcomes[0].performative is Performative.INFORM
    assert outcomes[0].content["status"] == "success"
    # three tasks executed in blueprint order
    completed = world.evts(tracelog.TASK_COMPLETED)
    assert [(e["payload"]["task_id"], e["payload"]["robot_id"]) for e in completed] == [
        ("T1", "R1"),
        ("T2", "R1"),
        ("T3", "R3"),
    ]


def test_unknown_kind_fails_without_planner_contact(world):
    world.submit("rq-1", "Rq9")
    world.run_until(1000)
    outcomes = world.outcomes()
    assert outcomes[0].content["reason"] == "no_blueprint"
    assert world.msgs(sender="RqM", receiver="PLN") == []


def test_duplicate_request_id_refused_and_uncounted(world):
    world.submit("rq-1", "Rq2")
    world.run_until(1000)
    world.submit("rq-1", "Rq2")
    world.run_until(2000)
    refusals = [m for m in world.inbox if m.content_kind == "request_rejected"]
    assert len(refusals) == 1
    assert world.rqm.received == 1


def test_fcfs_forwarding_order(world):
    world.submit("rq-1", "Rq1")
    world.submit("rq-2", "Rq2")
    world.run_until(1000)
    plan_requests = world.msgs(sender="RqM", receiver="PLN", content_kind="plan_request")
    assert [m["content"]["request_id"] for m in plan_requests] == ["rq-1", "rq-2"]


def test_insufficient_robots_failure_propagates(world):
    world.registry("deregister", "R3")
    world.run_until(1000)
    world.submit("rq-1", "Rq1")
    world.run_until(2000)
    assert world.outcomes()[0].content["reason"] == "insufficient_robots"


def test_capability_mismatch_failure_names_reason(world):
    world.kb.upsert_blueprint(PlanBlueprint("Pb9", "Rq9", [Task("T9", ["C9"])]))
    world.submit("rq-1", "Rq9")
    world.run_until(1000)
    assert world.outcomes()[0].content["reason"] == "capability_mismatch"


def test_on_request_enqueues_before_dispatch(world):
    msg = AclMessage(
        Performative.REQUEST,
        world.client,
        world.rqm.aid,
        "rq-1",
        {"kind": "request", "id": "rq-1", "request_kind": "Rq2"},
    )
    assert world.rqm.on_request(msg) is True
    assert len(world.rqm.queue) == 1  # queued, not yet handed to the planner
    world.rqm.dispatch_all()
    assert len(world.rqm.queue) == 0


def test_dispatch_next_on_empty_queue_is_noop(world):
    assert len(world.rqm.queue) == 0
    world.rqm.dispatch_next()  # must not raise or emit anything
    assert world.outcomes() == []


def test_plan_timeout_when_planner_never_answers():
    # a bus world with a black-hole planner: the plan deadline must fire
    w = World.__new__(World)
    from mrsim.events import Scheduler
    from mrsim.knowledge_base import KnowledgeBase
    from mrsim.requests_manager import RequestsManager
    from mrsim.tracelog import EventTap, TraceLog

    w.scheduler = Scheduler()
    w.trace = TraceLog()
    w.tap = EventTap(w.trace)
    w.bus = MessageBus(w.scheduler, w.trace)
    w.kb = KnowledgeBase()
    w.rqm = RequestsManager(w.bus, w.kb, w.tap)
    w.bus.register_agent("PLN", handler=lambda msg: None)  # swallows everything
    w.client = w.bus.register_agent("CLIENT", handler=w._collect)
    w.inbox = []
    w.kb.upsert_blueprint(PB2)
    w.submit("rq-1", "Rq2")
    w.run_until(29_999)
    assert w.outcomes() == []
    w.run_until(30_000)  # default plan timeout
    assert w.outcomes()[0].content["reason"] == "plan_timeout"


def test_late_feedback_after_timeout_leaves_outcome_unchanged():
    # execution takes longer than the execution deadline
    w = World(task_duration_ms=120_000)
    w.rqm.exec_timeout_ms = 50_000
    w.kb.upsert_blueprint(PB1)
    w.registry("register", "R1", {"C2"})
    w.registry("register", "R3", {"C2"})
    w.submit("rq-1", "Rq1")
    w.run_until(400_000)
    outcomes = w.outcomes()
    assert len(outcomes) == 1
    assert outcomes[0].content["reason"] == "task_timeout"
    # the zombie plan still completed afterwards; its feedback was ignored
    assert w.rqm.entries["rq-1"].outcome.failure_reason.value == "task_timeout"


# ---------------------------------------------------------------------------
# Robots Manager
# ---------------------------------------------------------------------------


def test_sequential_dispatch_in_plan_order(world):
    world.submit("rq-1", "Rq2")
    world.run_until(1)
    # only T1 is in flight at t=0; T2 not yet dispatched
    assigned = world.evts(tracelog.TASK_ASSIGNED)
    assert [(e["payload"]["task_id"]) for e in assigned] == ["T1"]
    world.run_until(20_000)
    assigned = world.evts(tracelog.TASK_ASSIGNED)
    assert [(e["payload"]["task_id"]) for e in assigned] == ["T1", "T2"]


def test_history_increments_only_on_success(world):
    world.submit("rq-1", "Rq2")
    world.run_until(120_000)
    assert world.kb.robots["R1"].tasks_completed == 11  # 9 + T1 + T2
    assert world.kb.robots["R3"].tasks_completed == 12  # 11 + T3


def test_task_failure_stops_plan_and_reports(world):
    world.rbm.agents["R1"].fail_probability = 1.0
    world.submit("rq-1", "Rq2")
    world.run_until(120_000)
    assert world.outcomes()[0].content["reason"] == "task_failed"
    completed = world.evts(tracelog.TASK_COMPLETED)
    assert [e["payload"]["result"] for e in completed] == ["failure"]
    # T2, T3 never dispatched
    assert [e["payload"]["task_id"] for e in world.evts(tracelog.TASK_ASSIGNED)] == ["T1"]


def test_stalled_robot_times_out_and_request_fails(world):
    world.rbm.agents["R1"].stall_probability = 1.0
    world.submit("rq-1", "Rq2")
    world.run_until(400_000)
    assert world.outcomes()[0].content["reason"] == "task_timeout"
    timeout_evt = [e for e in world.evts(tracelog.TASK_COMPLETED) if e["payload"]["result"] == "timeout"]
    assert len(timeout_evt) == 1
    # abandoned robot returned to the idle pool; the rest of the plan never ran
    assert world.kb.robots["R1"].lifecycle is Lifecycle.UNCONTROLLED
    assert [e["payload"]["task_id"] for e in world.evts(tracelog.TASK_ASSIGNED)] == ["T1"]


def test_plan_for_departed_robot_fails_at_dispatch(world):
    # the assigned robot leaves between planning and plan delivery
    from mrsim.planner import verified_plan_payload
    from mrsim.domain import VerifiedPlan

    world.registry("deregister", "R1")
    world.run_until(1000)
    pv = VerifiedPlan("Pb2", "rq-x", [("T1", "R1")])
    world.bus.send(
        AclMessage(
            Performative.REQUEST,
            world.pln.aid,
            world.rbm.aid,
            "rq-x",
            {"kind": "verified_plan", "plan": verified_plan_payload(pv)},
        )
    )
    world.run_until(2000)
    failures = world.msgs(sender="RbM", receiver="RqM", content_kind="plan_result")
    assert failures and failures[0]["content"]["reason"] == "robot_gone"


def test_empty_assignment_plan_violates_precondition(world):
    from mrsim.domain import VerifiedPlan
    from mrsim.planner import verified_plan_payload

    pv = VerifiedPlan("Pb2", "rq-x", [])
    with pytest.raises(ValueError):
        world.rbm.on_verified_plan(
            AclMessage(
                Performative.REQUEST,
                world.pln.aid,
                world.rbm.aid,
                "rq-x",
                {"kind": "verified_plan", "plan": verified_plan_payload(pv)},
            )
        )


def test_deregistration_of_busy_robot_defers_until_task_completes(world):
    world.submit("rq-1", "Rq2")
    world.run_until(1)  # T1 in flight on R1
    world.registry("deregister", "R1")
    world.run_until(2)
    assert world.kb.robots["R1"].registered  # still holding its slot
    assert "R1" in world.rbm.pending_deregistration
    world.run_until(20_001)
    assert not world.kb.robots["R1"].registered
    # T2 was bound to R1, so the plan fails at its dispatch
    assert world.outcomes()[0].content["reason"] == "task_failed"


def test_failfast_deregistration_aborts_running_plan():
    w = World(defer=False)
    w.kb.upsert_blueprint(PB2)
    w.registry("register", "R1", {"C1", "C2", "C3", "C4"})
    w.registry("register", "R3", {"C2", "C5"})
    w.submit("rq-1", "Rq2")
    w.run_until(1)
    w.registry("deregister", "R1")
    w.run_until(5000)
    assert not w.kb.robots["R1"].registered
    assert w.outcomes()[0].content["reason"] == "task_failed"


def test_busy_robot_refuses_and_plan_parks_until_free(world):
    world.submit("rq-1", "Rq1")
    world.submit("rq-2", "Rq1")
    world.run_until(300_000)
    outcomes = {m.conversation_id: m.content["status"] for m in world.outcomes()}
    assert outcomes == {"rq-1": "success", "rq-2": "success"}
    refusals = world.msgs(content_kind="task_refused")
    assert refusals, "second plan should have been refused by the busy robot at least once"


def test_stale_attempt_events_cannot_perturb_live_plan(world):
    world.submit("rq-1", "Rq1")
    world.submit("rq-2", "Rq1")
    world.run_until(1)
    # rq-2's first dispatch was refused and parked; replay its dead attempt's
    # deadline and reply against the manager: both must be ignored
    parked_conv = next(iter(world.rbm.parked.values()))[0]
    execution = world.rbm.executions[parked_conv]
    assert execution.parked_on is not None and execution.inflight_conv is None
    world.rbm.on_task_timeout(f"{parked_conv}/T4#1")
    world.run_until(300_000)
    outcomes = {m.conversation_id: m.content["status"] for m in world.outcomes()}
    assert outcomes == {"rq-1": "success", "rq-2": "success"}


def test_registration_capacity_refused_via_bus(world):
    world.registry("register", "R2", {"C2"})
    world.run_until(1000)
    world.registry("register", "R4", {"C1"})
    world.run_until(2000)
    refusals = [m for m in world.inbox if m.content_kind == "registry_refused"]
    assert len(refusals) == 1
    assert refusals[0].content["capacity"] is True


def test_reregistration_updates_capabilities_for_planner(world):
    world.registry("deregister", "R3")
    world.run_until(1000)
    world.registry("register", "R3", {"C2", "C5", "C9"})
    world.run_until(2000)
    assert world.kb.capable_robots(Task("T", ["C9"])) == ["R3"]


def test_feedback_at_deadline_tick_beats_timer(world):
    # task duration exactly equals the timeout: completion message wins
    w = World(task_duration_ms=60_000, task_timeout_ms=60_000)
    w.kb.upsert_blueprint(PlanBlueprint("Pb", "Rq1", [Task("T4", ["C2"])]))
    # single-task blueprint still needs two registered robots
    w.registry("register", "R1", {"C2"})
    w.registry("register", "R3", {"C2"})
    w.submit("rq-1", "Rq1")
    w.run_until(120_000)
    assert w.outcomes()[0].content["status"] == "success"


def test_blueprint_edit_applies_to_subsequent_plans_only(world):
    world.submit("rq-1", "Rq2")
    world.run_until(1)  # rq-1 planned against the 3-task blueprint
    extended = PlanBlueprint("Pb2", "Rq2", list(PB2.tasks) + [Task("T7", ["C2"])])
    world.kb.upsert_blueprint(extended)
    world.submit("rq-2", "Rq2")
    world.run_until(300_000)
    plans = {
        e["payload"]["request_id"]: len(e["payload"]["assignments"])
        for e in world.evts(tracelog.PLAN_CREATED)
    }
    assert plans == {"rq-1": 3, "rq-2": 4}


def test_parked_plan_recovers_after_stall_timeout():
    w = World()
    w.kb.upsert_blueprint(PB1)
    w.registry("register", "R1", {"C2"})
    w.registry("register", "R3", {"C2"})
    w.run_until(0)
    w.rbm.agents["R1"].stall_probability = 1.0  # first assignment stalls
    w.submit("rq-1", "Rq1")
    w.run_until(1)
    w.rbm.agents["R1"].stall_probability = 0.0
    w.submit("rq-2", "Rq1")
    w.run_until(600_000)
    outcomes = {m.conversation_id: (m.content["status"], m.content.get("reason")) for m in w.outcomes()}
    assert outcomes["rq-1"] == ("failed", "task_timeout")
    assert outcomes["rq-2"] == ("success", None)


def test_robot_state_evts_cover_lifecycle(world):
    world.submit("rq-1", "Rq2")
    world.run_until(120_000)
    states = [
        (e["payload"]["robot_id"], e["payload"]["state"]) for e in world.evts(tracelog.ROBOT_STATE)
    ]
    assert states[:2] == [("R1", "uncontrolled"), ("R3", "uncontrolled")]
    assert ("R1", "controlled") in states
    assert ("R3", "controlled") in states
