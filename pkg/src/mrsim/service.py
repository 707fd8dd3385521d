"""Network facade for interactive runs.

Runs a scenario in paced mode on a background thread: logical time advances
at ``speed`` simulated seconds per wall second. HTTP commands mirror the
operator-console affordances (blueprint editing, robot registration, request
injection, pacing control); every mutation flows through a serialized
command queue drained between events and is acknowledged with the logical
time at which it applied. A server-push event stream at /events carries
state changes and per-minute metric rows in simulation order; slow clients
lose oldest frames first and receive a gap marker.
"""

from __future__ import annotations

import json
import logging
import queue
import threading
import time
from dataclasses import dataclass, field
from typing import Any, Optional

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse, StreamingResponse

from mrsim.bus import AclMessage, Performative
from mrsim.domain import PlanBlueprint, Task, validate_blueprint
from mrsim.knowledge_base import CapacityError, KnowledgeBaseError
from mrsim.planner import blueprint_payload
from mrsim.scenario import ScenarioConfig
from mrsim.sim import Simulation

logger = logging.getLogger(__name__)

COMMAND_KINDS = frozenset(
    {
        "UpsertBlueprint",
        "RemoveBlueprint",
        "SubmitRequest",
        "RegisterRobot",
        "DeregisterRobot",
        "Pause",
        "Resume",
        "SetSpeed",
    }
)

CLIENT_QUEUE_LIMIT = 512


@dataclass
class CommandEnvelope:
    kind: str
    payload: dict
    client_id: str = ""
    done: threading.Event = field(default_factory=threading.Event)
    result: Any = None
    error: Optional[Exception] = None
    applied_t_ms: int = 0


class DomainRejection(Exception):
    """Command refused by domain rules (maps to HTTP 409)."""


class UnknownEntity(Exception):
    """Command names something that does not exist (maps to HTTP 404)."""


class _StreamClient:
    def __init__(self):
        self.frames: queue.Queue = queue.Queue(maxsize=CLIENT_QUEUE_LIMIT)
        self.dropped = 0
        self.lock = threading.Lock()

    def push(self, frame: dict) -> None:
        with self.lock:
            try:
                self.frames.put_nowait(frame)
            except queue.Full:
                # drop-oldest policy with a gap marker for the reader
                try:
                    self.frames.get_nowait()
                except queue.Empty:
                    pass
                self.dropped += 1
                try:
                    self.frames.put_nowait(frame)
                except queue.Full:
                    pass

    def pop(self, timeout: float) -> Optional[dict]:
        with self.lock:
            if self.dropped:
                dropped, self.dropped = self.dropped, 0
                return {"t": None, "kind": "gap", "payload": {"dropped": dropped}}
        try:
            return self.frames.get(timeout=timeout)
        except queue.Empty:
            return None


class PacedRun:
    """Owns the simulation thread, the command queue, and stream fan-out."""

    def __init__(self, config: ScenarioConfig, speed: float = 1.0):
        self.simulation = Simulation(config)
        self.speed = max(speed, 0.001)
        self.paused = False
        self.commands: queue.Queue[CommandEnvelope] = queue.Queue()
        self.lock = threading.RLock()  # guards simulation state for snapshot reads
        self.clients: list[_StreamClient] = []
        self.clients_lock = threading.Lock()
        self._stop = threading.Event()
        self._thread = threading.Thread(target=self._loop, name="mrsim-paced", daemon=True)
        self._seq = 0
        self._op_counter = 0
        self.fault: Optional[str] = None
        self.simulation.tap.subscribe(self._on_evt)
        self.simulation.row_hook = self._on_row

    # -- lifecycle ------------------------------------------------------------

    def start(self) -> None:
        self._thread.start()

    def stop(self) -> None:
        self._stop.set()
        self._thread.join(timeout=5)

    @property
    def finished(self) -> bool:
        return self.simulation.now >= self.simulation.config.duration_ms

    # -- stream fan-out ----------------------------------------------------------

    def subscribe(self) -> _StreamClient:
        client = _StreamClient()
        with self.clients_lock:
            self.clients.append(client)
        return client

    def unsubscribe(self, client: _StreamClient) -> None:
        with self.clients_lock:
            if client in self.clients:
                self.clients.remove(client)

    def _publish(self, frame: dict) -> None:
        with self.clients_lock:
            for client in self.clients:
                client.push(frame)

    def _on_evt(self, t_ms: int, event: str, payload: dict) -> None:
        self._publish({"t": t_ms, "kind": event, "payload": payload})

    def _on_row(self, row) -> None:
        self._publish(
            {
                "t": row.t_min * 60_000,
                "kind": "metrics_row",
                "payload": {
                    "t_min": row.t_min,
                    "received": row.received,
                    "processed": row.processed,
                    "unprocessed": row.unprocessed,
                    "success": row.success,
                    "failed": row.failed,
                    "latency_s": row.latency_ms / 1000.0,
                    "efficiency": row.efficiency,
                },
            }
        )

    # -- the paced loop ------------------------------------------------------------

    def _loop(self) -> None:
        wall_anchor = time.monotonic()
        logical_anchor = 0
        while not self._stop.is_set():
            applied = self._drain_commands()
            if self.paused or self.finished:
                # keep serving commands and snapshot reads without advancing
                wall_anchor = time.monotonic()
                logical_anchor = self.simulation.now
                time.sleep(0.01)
                continue
            if applied:
                wall_anchor = time.monotonic()
                logical_anchor = self.simulation.now
            target = logical_anchor + int((time.monotonic() - wall_anchor) * 1000 * self.speed)
            target = min(target, self.simulation.config.duration_ms)
            if target > self.simulation.now:
                try:
                    with self.lock:
                        self.simulation.process_until(target)
                except Exception as exc:
                    # halt advancement but keep answering commands and reads
                    self.fault = str(exc)
                    logger.error("simulation halted: %s", exc)
                    self.paused = True
            time.sleep(0.005)
        self._drain_commands()

    def _drain_commands(self) -> bool:
        applied = False
        while True:
            try:
                envelope = self.commands.get_nowait()
            except queue.Empty:
                return applied
            with self.lock:
                envelope.applied_t_ms = self.simulation.now
                try:
                    envelope.result = self._apply(envelope)
                except Exception as exc:  # surfaced to the HTTP handler
                    envelope.error = exc
            envelope.done.set()
            applied = True

    def submit(self, kind: str, payload: dict, client_id: str = "") -> CommandEnvelope:
        if kind not in COMMAND_KINDS:
            raise ValueError(f"unknown command kind {kind!r}")
        if self.fault is not None:
            raise RuntimeError(f"simulation halted: {self.fault}")
        envelope = CommandEnvelope(kind, payload, client_id)
        self.commands.put(envelope)
        if not envelope.done.wait(timeout=10):
            raise TimeoutError(f"command {kind} was not applied in time")
        if envelope.error is not None:
            raise envelope.error
        return envelope

    # -- command application (loop thread only) ---------------------------------------

    def _apply(self, envelope: CommandEnvelope):
        sim = self.simulation
        kind = envelope.kind
        payload = envelope.payload
        if kind == "UpsertBlueprint":
            pb = PlanBlueprint(
                payload["id"],
                payload["kind"],
                [Task(t["id"], t["required"]) for t in payload["tasks"]],
            )
            violations = validate_blueprint(pb)
            if violations:
                raise ValueError("; ".join(violations))
            sim.kb.upsert_blueprint(pb)
            return blueprint_payload(pb)
        if kind == "RemoveBlueprint":
            if not sim.kb.remove_blueprint(payload["kind"]):
                raise UnknownEntity(f"no blueprint for kind {payload['kind']!r}")
            return {"removed": payload["kind"]}
        if kind == "SubmitRequest":
            self._op_counter += 1
            request_id = payload.get("id") or f"op-{self._op_counter}"
            if request_id in sim.rqm.entries:
                raise DomainRejection(f"duplicate request id {request_id!r}")
            sim.bus.send(
                AclMessage(
                    Performative.REQUEST,
                    sim.operator_aid,
                    sim.rqm.aid,
                    request_id,
                    {"kind": "request", "id": request_id, "request_kind": payload["kind"]},
                )
            )
            return {"request_id": request_id}
        if kind == "RegisterRobot":
            try:
                sim.rbm.handle_registration(payload["robot_id"], payload["capabilities"])
            except (CapacityError, KnowledgeBaseError) as exc:
                raise DomainRejection(str(exc)) from exc
            return {"robot_id": payload["robot_id"], "state": "uncontrolled"}
        if kind == "DeregisterRobot":
            robot_id = payload["robot_id"]
            if robot_id not in sim.rbm.agents:
                raise UnknownEntity(f"unknown robot {robot_id!r}")
            try:
                deferred = sim.rbm.handle_deregistration(robot_id)
            except KnowledgeBaseError as exc:
                raise DomainRejection(str(exc)) from exc
            return {"robot_id": robot_id, "deferred": deferred}
        if kind == "Pause":
            self.paused = True
            return {"paused": True}
        if kind == "Resume":
            self.paused = False
            return {"paused": False}
        if kind == "SetSpeed":
            factor = float(payload["factor"])
            if factor <= 0:
                raise ValueError("speed factor must be positive")
            self.speed = factor
            return {"speed": factor}
        raise ValueError(f"unknown command kind {kind!r}")

    # -- snapshot reads (any thread) ------------------------------------------------------

    def blueprints_snapshot(self) -> list[dict]:
        with self.lock:
            return [blueprint_payload(pb) for pb in self.simulation.kb.blueprints.values()]

    def robots_snapshot(self) -> list[dict]:
        with self.lock:
            sim = self.simulation
            now = sim.now
            rows = []
            for robot_id in sorted(sim.rbm.agents):
                agent = sim.rbm.agents[robot_id]
                record = sim.kb.robots.get(robot_id)
                report = self._robot_report_locked(robot_id, now)
                rows.append(
                    {
                        "robot_id": robot_id,
                        "capabilities": sorted(agent.capabilities),
                        "state": agent.times.state.value,
                        "tasks_completed": record.tasks_completed if record else 0,
                        "pending_deregistration": robot_id in sim.rbm.pending_deregistration,
                        "availability": report["availability"],
                        "utilization": report["utilization"],
                        "effectiveness": report["effectiveness"],
                    }
                )
            return rows

    def _robot_report_locked(self, robot_id: str, now: int) -> dict:
        report = self.simulation.collector.robot_report(robot_id, now)
        return {
            "availability": report.availability,
            "utilization": report.utilization,
            "effectiveness": report.effectiveness,
        }

    def system_metrics_snapshot(self) -> dict:
        with self.lock:
            sim = self.simulation
            rows = [
                {
                    "t_min": row.t_min,
                    "received": row.received,
                    "processed": row.processed,
                    "unprocessed": row.unprocessed,
                    "success": row.success,
                    "failed": row.failed,
                    "latency_s": row.latency_ms / 1000.0,
                    "efficiency": row.efficiency,
                }
                for row in sim.series_rows
            ]
            return {"t_ms": sim.now, "rows": rows}

    def robot_metrics_snapshot(self) -> list[dict]:
        with self.lock:
            sim = self.simulation
            now = sim.now
            out = []
            for report in sim.collector.all_robot_reports(now):
                out.append(
                    {
                        "robot_id": report.robot_id,
                        "t_c_s": report.t_c_ms / 1000.0,
                        "t_unc_s": report.t_unc_ms / 1000.0,
                        "t_r_s": report.t_r_ms / 1000.0,
                        "t_unr_s": report.t_unr_ms / 1000.0,
                        "t_ov_s": report.t_ov_ms / 1000.0,
                        "tasks_completed": report.tasks_completed,
                        "availability": report.availability,
                        "utilization": report.utilization,
                        "effectiveness": report.effectiveness,
                    }
                )
            return out

    def plans_snapshot(self) -> list[dict]:
        with self.lock:
            sim = self.simulation
            out = []
            for conv, execution in sim.rbm.executions.items():
                out.append(
                    {
                        "request_id": execution.pv.request_id,
                        "blueprint_id": execution.pv.blueprint_id,
                        "assignments": [[t, r] for t, r in execution.pv.assignments],
                        "cursor": execution.cursor,
                        "parked_on": execution.parked_on,
                    }
                )
            return out


def create_app(config: ScenarioConfig, speed: float = 1.0, ui_dir: Optional[str] = None) -> FastAPI:
    from contextlib import asynccontextmanager

    run = PacedRun(config, speed=speed)

    @asynccontextmanager
    async def lifespan(_app):
        run.start()
        yield
        run.stop()

    app = FastAPI(title="mrsim operator service", lifespan=lifespan)
    app.state.run = run

    def command(kind: str, payload: dict) -> JSONResponse:
        try:
            envelope = run.submit(kind, payload)
        except DomainRejection as exc:
            return JSONResponse({"error": str(exc)}, status_code=409)
        except UnknownEntity as exc:
            return JSONResponse({"error": str(exc)}, status_code=404)
        except (ValueError, KeyError, TypeError) as exc:
            return JSONResponse({"error": str(exc)}, status_code=400)
        return JSONResponse({"applied_t_ms": envelope.applied_t_ms, "result": envelope.result})

    # -- blueprints ---------------------------------------------------------------

    @app.get("/blueprints")
    def list_blueprints():
        return run.blueprints_snapshot()

    @app.get("/blueprints/{kind}")
    def get_blueprint(kind: str):
        for pb in run.blueprints_snapshot():
            if pb["request_kind"] == kind:
                return pb
        return JSONResponse({"error": f"no blueprint for kind {kind!r}"}, status_code=404)

    @app.put("/blueprints/{kind}")
    async def put_blueprint(kind: str, request: Request):
        body = await request.json()
        if not isinstance(body, dict) or "id" not in body or "tasks" not in body:
            return JSONResponse({"error": "blueprint body needs id and tasks"}, status_code=400)
        payload = {"id": body["id"], "kind": kind, "tasks": body["tasks"]}
        return command("UpsertBlueprint", payload)

    @app.delete("/blueprints/{kind}")
    def delete_blueprint(kind: str):
        return command("RemoveBlueprint", {"kind": kind})

    # -- robots ------------------------------------------------------------------

    @app.get("/robots")
    def list_robots():
        return run.robots_snapshot()

    @app.post("/robots/{robot_id}/register")
    async def register_robot(robot_id: str, request: Request):
        body = await request.json()
        caps = body.get("capabilities") if isinstance(body, dict) else None
        if not caps or not isinstance(caps, list):
            return JSONResponse({"error": "capabilities list required"}, status_code=400)
        return command("RegisterRobot", {"robot_id": robot_id, "capabilities": caps})

    @app.post("/robots/{robot_id}/deregister")
    def deregister_robot(robot_id: str):
        return command("DeregisterRobot", {"robot_id": robot_id})

    # -- requests and plans ---------------------------------------------------------

    @app.post("/requests")
    async def submit_request(request: Request):
        body = await request.json()
        if not isinstance(body, dict) or "kind" not in body:
            return JSONResponse({"error": "request body needs a kind"}, status_code=400)
        return command("SubmitRequest", {"kind": body["kind"], "id": body.get("id")})

    @app.get("/plans")
    def list_plans():
        return run.plans_snapshot()

    # -- metrics ----------------------------------------------------------------------

    @app.get("/metrics/system")
    def metrics_system():
        return run.system_metrics_snapshot()

    @app.get("/metrics/robots")
    def metrics_robots():
        return run.robot_metrics_snapshot()

    # -- control ---------------------------------------------------------------------

    @app.post("/control/pause")
    def control_pause():
        return command("Pause", {})

    @app.post("/control/resume")
    def control_resume():
        return command("Resume", {})

    @app.post("/control/speed")
    async def control_speed(request: Request):
        body = await request.json()
        return command("SetSpeed", {"factor": body.get("factor")})

    # -- event stream -------------------------------------------------------------------

    @app.get("/events")
    def events():
        client = run.subscribe()

        def generate():
            seq = 0
            try:
                while True:
                    frame = client.pop(timeout=0.5)
                    if frame is None:
                        if run.finished:
                            break
                        yield ": keepalive\n\n"
                        continue
                    seq += 1
                    yield f"id: {seq}\ndata: {json.dumps(frame, sort_keys=True)}\n\n"
            finally:
                run.unsubscribe(client)

        return StreamingResponse(generate(), media_type="text/event-stream")

    if ui_dir:
        from fastapi.staticfiles import StaticFiles

        app.mount("/ui", StaticFiles(directory=ui_dir, html=True), name="ui")

    return app
