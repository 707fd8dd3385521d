/** Single console store: every displayed number comes from a service frame
 * or query response; nothing is simulated client-side. */

import type { Blueprint, Frame, MetricsRow, PlanView, RobotRow } from "./types.js";

export type ConnectionState = "connecting" | "live" | "reconnecting" | "closed";

export const SERIES_LIMIT = 240;
export const LOG_LIMIT = 200;

export interface ConsoleState {
  connection: ConnectionState;
  blueprints: Blueprint[];
  robots: RobotRow[];
  plans: Map<string, PlanView>;
  series: (MetricsRow | null)[]; // null entries are stream-gap discontinuities
  eventLog: string[];
  warnings: string[];
}

export function initialState(): ConsoleState {
  return {
    connection: "connecting",
    blueprints: [],
    robots: [],
    plans: new Map(),
    series: [],
    eventLog: [],
    warnings: [],
  };
}

function pushLog(state: ConsoleState, t: number | null, line: string): void {
  const stamp = t === null ? "--:--" : formatClock(t);
  state.eventLog.push(`[${stamp}] ${line}`);
  if (state.eventLog.length > LOG_LIMIT) {
    state.eventLog.splice(0, state.eventLog.length - LOG_LIMIT);
  }
}

export function formatClock(t_ms: number): string {
  const totalSeconds = Math.floor(t_ms / 1000);
  const minutes = Math.floor(totalSeconds / 60);
  const seconds = totalSeconds % 60;
  return `${String(minutes).padStart(2, "0")}:${String(seconds).padStart(2, "0")}`;
}

/** Fold one stream frame into the state. Returns the same (mutated) state. */
export function applyFrame(state: ConsoleState, frame: Frame): ConsoleState {
  const p = frame.payload as Record<string, any>;
  switch (frame.kind) {
    case "gap": {
      state.series.push(null);
      pushLog(state, frame.t, `stream gap: ${p["dropped"]} frames dropped`);
      break;
    }
    case "request_received": {
      pushLog(state, frame.t, `request ${p["request_id"]} (${p["request_kind"]}) received`);
      break;
    }
    case "plan_created": {
      const assignments = (p["assignments"] as [string, string][]) ?? [];
      const plan: PlanView = {
        requestId: String(p["request_id"]),
        blueprintId: String(p["blueprint_id"]),
        assignments,
        taskStatus: Object.fromEntries(assignments.map(([t]) => [t, "pending"])),
        outcome: "running",
      };
      state.plans.set(plan.requestId, plan);
      pushLog(
        state,
        frame.t,
        `plan ${plan.blueprintId} for ${plan.requestId}: ` +
          assignments.map(([t, r]) => `${t}→${r}`).join(", "),
      );
      break;
    }
    case "plan_failed": {
      pushLog(state, frame.t, `planning failed for ${p["request_id"]}: ${p["reason"]}`);
      break;
    }
    case "task_assigned": {
      const plan = state.plans.get(String(p["request_id"]));
      if (plan) plan.taskStatus[String(p["task_id"])] = "assigned";
      pushLog(state, frame.t, `task ${p["task_id"]} assigned to ${p["robot_id"]}`);
      break;
    }
    case "task_completed": {
      const plan = state.plans.get(String(p["request_id"]));
      const result = String(p["result"]) as "success" | "failure" | "timeout";
      if (plan) plan.taskStatus[String(p["task_id"])] = result;
      pushLog(state, frame.t, `task ${p["task_id"]} on ${p["robot_id"]}: ${result}`);
      break;
    }
    case "request_outcome": {
      const plan = state.plans.get(String(p["request_id"]));
      if (plan) {
        plan.outcome = p["status"] === "success" ? "success" : "failed";
        if (p["reason"]) plan.reason = String(p["reason"]);
      }
      const suffix = p["reason"] ? ` (${p["reason"]})` : "";
      pushLog(state, frame.t, `request ${p["request_id"]}: ${p["status"]}${suffix}`);
      break;
    }
    case "robot_state": {
      const robot = state.robots.find((r) => r.robot_id === p["robot_id"]);
      if (robot) {
        robot.state = p["state"];
        if (p["capabilities"]) robot.capabilities = p["capabilities"];
        if (robot.state !== "unregistered") robot.pending_deregistration = false;
      }
      pushLog(state, frame.t, `robot ${p["robot_id"]} → ${p["state"]}`);
      break;
    }
    case "metrics_row": {
      const row = p as unknown as MetricsRow;
      checkRowInvariants(state, row);
      state.series.push(row);
      if (state.series.length > SERIES_LIMIT) {
        state.series.splice(0, state.series.length - SERIES_LIMIT);
      }
      break;
    }
    default:
      pushLog(state, frame.t, `${frame.kind}`);
  }
  return state;
}

/** The charts mirror the service's conservation identities; a row that
 * violates them renders a visible warning instead of being trusted. */
function checkRowInvariants(state: ConsoleState, row: MetricsRow): void {
  if (row.processed + row.unprocessed !== row.received) {
    state.warnings.push(
      `minute ${row.t_min}: processed ${row.processed} + unprocessed ${row.unprocessed} != received ${row.received}`,
    );
  }
  if (row.success + row.failed !== row.processed) {
    state.warnings.push(
      `minute ${row.t_min}: success ${row.success} + failed ${row.failed} != processed ${row.processed}`,
    );
  }
}

export function setConnection(state: ConsoleState, connection: ConnectionState): ConsoleState {
  if (state.connection !== connection) {
    state.connection = connection;
    pushLog(state, null, `connection: ${connection}`);
  }
  return state;
}

/** Replace snapshot-backed slices after a (re)connect resync. */
export function applySnapshots(
  state: ConsoleState,
  blueprints: Blueprint[],
  robots: RobotRow[],
  rows: MetricsRow[],
): ConsoleState {
  state.blueprints = blueprints;
  state.robots = robots;
  state.series = [...rows];
  return state;
}
