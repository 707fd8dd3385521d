"""Acceptance suite: one test per criterion, each printing a PASS line.

Run with ``pytest tests/test_acceptance.py -v -s`` to see the verdict lines.
The plan-decision audit re-derives every planning choice from the trace with
an independent brute-force resolver; it never calls the planner.
"""

import dataclasses
import itertools
import time

import pytest

from mrsim import sim, tracelog
from mrsim.domain import FailureReason, PlanBlueprint, Task, VerifiedPlan
from mrsim.knowledge_base import RobotSnapshot
from mrsim.metrics import (
    RobotReport,
    replay_metrics,
    robot_reports_csv,
    system_series_csv,
)
from mrsim.planner import PlanFailure, build_verified_plan
from mrsim.scenario import FaultSpec, RobotSpec, default_config
from mrsim.tracelog import parse_trace
from mrsim.workflow import GatewayFault, GatewayKind, merge_fire, split

MIN = 60_000


def ok(line: str) -> None:
    print(f"\nACCEPTANCE PASS: {line}")


# ---------------------------------------------------------------------------
# 1. worked plan-construction example, exact
# ---------------------------------------------------------------------------


def test_showcase_plan_construction_exact():
    fleet = [
        RobotSnapshot("R1", frozenset({"C1", "C2", "C3", "C4"}), 9),
        RobotSnapshot("R3", frozenset({"C2", "C5"}), 11),
    ]
    pb = PlanBlueprint(
        "Pb2",
        "Rq2",
        [Task("T1", ["C1", "C3", "C4"]), Task("T2", ["C2"]), Task("T3", ["C2", "C5"])],
    )
    start = time.perf_counter()
    plan = build_verified_plan(pb, fleet, "rq-2")
    elapsed_ms = (time.perf_counter() - start) * 1000
    assert isinstance(plan, VerifiedPlan)
    assert plan.assignments == (("T1", "R1"), ("T2", "R1"), ("T3", "R3"))
    assert elapsed_ms < 100
    ok("showcase plan: T1->R1, T2->R1, T3->R3 (exact)")


# ---------------------------------------------------------------------------
# 2. robot indicator formulas
# ---------------------------------------------------------------------------


def test_robot_indicator_formulas():
    r2 = RobotReport.from_times("R2", 8 * MIN, 9 * MIN, 17 * MIN, 30 * MIN)
    assert r2.availability == pytest.approx(0.57, abs=0.005)
    assert r2.utilization == pytest.approx(0.27, abs=0.005)
    assert r2.effectiveness == pytest.approx(0.89, abs=0.005)

    r3 = RobotReport.from_times("R3", 12 * MIN, 10 * MIN, 22 * MIN, 30 * MIN)
    assert r3.availability == pytest.approx(0.73, abs=0.005)
    assert r3.utilization == pytest.approx(0.40, abs=0.005)
    assert r3.effectiveness == pytest.approx(1.20, abs=0.005)

    # first column is internally inconsistent in its source, so the formulas
    # are checked one at a time
    assert 20 * MIN / (30 * MIN) == pytest.approx(0.67, abs=0.005)
    assert 11 * MIN / (30 * MIN) == pytest.approx(0.37, abs=0.005)
    ok("robot indicator formulas reproduce both consistent report columns within 0.005")


# ---------------------------------------------------------------------------
# 3. gateway truth tables + inclusive-merge token oracle
# ---------------------------------------------------------------------------


def test_gateway_semantics_exhaustive():
    start = time.perf_counter()
    checked = 0
    for n in (2, 3):
        edges = [f"e{i}" for i in range(n)]
        declared = set(edges)
        for bits in itertools.product([False, True], repeat=n):
            conditions = list(zip(edges, bits))
            true_set = {e for e, b in conditions if b}
            assert split(GatewayKind.AND, conditions) == declared
            if len(true_set) == 1:
                assert split(GatewayKind.XOR, conditions) == true_set
            else:
                with pytest.raises(GatewayFault):
                    split(GatewayKind.XOR, conditions)
            if true_set:
                assert split(GatewayKind.OR, conditions) == true_set
            else:
                with pytest.raises(GatewayFault):
                    split(GatewayKind.OR, conditions)
            arrived = true_set
            assert merge_fire(GatewayKind.XOR, arrived, declared) == (len(arrived) >= 1)
            assert merge_fire(GatewayKind.AND, arrived, declared) == (arrived == declared)
            checked += 5
        # inclusive merge against a brute-force token simulation: for every
        # activation subset and every arrival order, the merge fires exactly
        # once, at the last activated branch's arrival
        for r in range(1, n + 1):
            for activated in itertools.combinations(edges, r):
                activated_set = set(activated)
                for order in itertools.permutations(activated):
                    seen: set[str] = set()
                    fires = []
                    for edge in order:
                        seen.add(edge)
                        fires.append(merge_fire(GatewayKind.OR, set(seen), activated_set))
                    assert fires[:-1] == [False] * (len(order) - 1)
                    assert fires[-1] is True
                    checked += 1
    elapsed = time.perf_counter() - start
    assert elapsed < 1.0
    ok(f"gateway truth tables and inclusive-merge oracle: {checked} cases in {elapsed:.2f}s")


# ---------------------------------------------------------------------------
# 4. default scenario shape (structural acceptance)
# ---------------------------------------------------------------------------


def test_default_scenario_shape():
    start = time.perf_counter()
    # invariant probes run after every event: fleet cap, request conservation,
    # and per-robot time identities all enforced in-run
    output = sim.run(default_config(seed=42), check_invariants=True)
    elapsed = time.perf_counter() - start

    arrivals = [
        r for r in output.trace.records if r.get("kind") == "evt" and r["event"] == "request_received"
    ]
    assert len(arrivals) == 30
    assert len(output.series_rows) == 30
    for row in output.series_rows:
        assert row.processed + row.unprocessed == row.received
        assert row.success + row.failed == row.processed
        assert (row.latency_ms == 0) == (row.unprocessed == 0)

    # registered fleet never exceeds the cap, re-derived from the trace
    registered: set[str] = set()
    for t, event, payload in tracelog.iter_events(output.trace.records):
        if event == "robot_state":
            if payload["state"] == "unregistered":
                registered.discard(payload["robot_id"])
            else:
                registered.add(payload["robot_id"])
            assert len(registered) <= 3

    # per-robot time identities at the end of the run (they were also checked
    # after every event by the in-run probe)
    for report in output.robot_reports:
        assert report.t_c_ms + report.t_unc_ms == report.t_r_ms
        assert report.t_r_ms + report.t_unr_ms == report.t_ov_ms
        assert report.t_ov_ms == 30 * MIN

    assert elapsed < 5.0
    ok(
        f"default run shape: 30 arrivals, 30 rows, fleet cap and conservation held "
        f"({elapsed:.2f}s with per-event probes)"
    )


# ---------------------------------------------------------------------------
# 5. planner argmin invariance across 100 seeded runs (trace audit)
# ---------------------------------------------------------------------------


def brute_force_assignments(tasks: list[dict], fleet: dict[str, dict]) -> object:
    """Independent re-derivation: subset test per candidate, then min by
    (history + within-plan tentative count, robot id)."""
    if len(fleet) < 2:
        return "insufficient"
    tentative = {rid: 0 for rid in fleet}
    out = []
    for task in tasks:
        required = set(task["required"])
        candidates = []
        for rid, info in fleet.items():
            if required <= info["caps"]:
                candidates.append((info["hist"] + tentative[rid], rid))
        if not candidates:
            return ("mismatch", task["id"])
        candidates.sort()
        chosen = candidates[0][1]
        tentative[chosen] += 1
        out.append([task["id"], chosen])
    return out


def audit_trace(records: list[dict]) -> int:
    """Task histories survive deregistration, so they are tracked for the
    whole pool while fleet membership tracks only the registered set."""
    registered: set[str] = set()
    caps: dict[str, set] = {}
    hist: dict[str, int] = {}
    for robot in records[0].get("robots", []):
        hist[robot["robot_id"]] = robot.get("tasks_completed", 0)
    audited = 0
    for t, event, payload in tracelog.iter_events(records):
        if event == "robot_state":
            rid = payload["robot_id"]
            if payload["state"] == "unregistered":
                registered.discard(rid)
            else:
                registered.add(rid)
                caps[rid] = set(payload["capabilities"])
        elif event == "task_completed" and payload["result"] == "success":
            hist[payload["robot_id"]] = hist.get(payload["robot_id"], 0) + 1
        elif event == "plan_created":
            fleet = {rid: {"caps": caps[rid], "hist": hist.get(rid, 0)} for rid in registered}
            expected = brute_force_assignments(payload["tasks"], fleet)
            assert expected == payload["assignments"], (
                f"plan for {payload['request_id']} diverged from brute-force re-derivation"
            )
            audited += 1
        elif event == "plan_failed":
            if payload["reason"] == "insufficient_robots":
                assert len(registered) < 2
            audited += 1
    return audited


def test_argmin_invariance_over_100_seeded_runs():
    start = time.perf_counter()
    config = default_config()
    total_decisions = 0
    for seed in range(100):
        output = sim.run(dataclasses.replace(config, seed=seed), check_invariants=False)
        total_decisions += audit_trace(output.trace.records)
    elapsed = time.perf_counter() - start
    assert total_decisions > 1000, "audit should cover a substantial decision count"
    assert elapsed < 60.0
    ok(
        f"argmin invariance: {total_decisions} planning decisions across 100 seeded runs "
        f"audited in {elapsed:.1f}s"
    )


# ---------------------------------------------------------------------------
# 6. failure paths
# ---------------------------------------------------------------------------


def test_failure_paths():
    pb = PlanBlueprint("Pb", "Rq", [Task("T1", ["C1"])])

    # (a) one registered robot
    lone = [RobotSnapshot("R1", frozenset({"C1"}), 0)]
    result = build_verified_plan(pb, lone, "rq-a")
    assert isinstance(result, PlanFailure) and result.reason is FailureReason.INSUFFICIENT_ROBOTS

    # (b) unmatched capability
    fleet = [RobotSnapshot("R1", frozenset({"C1"}), 0), RobotSnapshot("R2", frozenset({"C2"}), 0)]
    result = build_verified_plan(PlanBlueprint("Pb", "Rq", [Task("T9", ["C9"])]), fleet, "rq-b")
    assert isinstance(result, PlanFailure) and result.reason is FailureReason.CAPABILITY_MISMATCH

    # (c) injected stall propagates to a failed request outcome
    cfg = dataclasses.replace(
        default_config(seed=1),
        duration_min=5,
        churn_period_s=0,
        request_kind_weights={"Rq2": 1.0},
        fault_injection={"R1": FaultSpec(stall_probability=1.0, fail_probability=0.0)},
    )
    output = sim.run(cfg)
    stalled = [o for o in output.outcomes if o.get("reason") == "task_timeout"]
    assert stalled, "stall injection must surface as a task-timeout request failure"

    # (d) unknown kind fails without planner contact
    cfg = dataclasses.replace(
        default_config(seed=2),
        duration_min=3,
        churn_period_s=0,
        request_kind_weights={"RqUnknown": 1.0},
    )
    output = sim.run(cfg)
    assert all(o.get("reason") == "no_blueprint" for o in output.outcomes)
    planner_contact = [
        r
        for r in output.trace.records
        if r.get("kind") == "msg" and r["sender"] == "RqM" and r["receiver"] == "PLN"
    ]
    assert planner_contact == []
    ok("failure paths: insufficient robots, capability mismatch, stall->timeout, no blueprint")


# ---------------------------------------------------------------------------
# 7. determinism and replay
# ---------------------------------------------------------------------------


def test_determinism_and_replay():
    config = default_config(seed=424242)
    first = sim.run(config)
    second = sim.run(config)
    assert first.trace_jsonl == second.trace_jsonl

    records = parse_trace(first.trace_jsonl)
    rows, reports = replay_metrics(records)
    assert system_series_csv(rows) == system_series_csv(first.series_rows)
    assert robot_reports_csv(reports) == robot_reports_csv(first.robot_reports)
    ok("determinism: byte-identical traces; replay reproduces both metric CSVs exactly")
