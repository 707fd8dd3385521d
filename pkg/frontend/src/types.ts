/** Wire types for the orchestration service API and its event stream. */

export interface BlueprintTask {
  id: string;
  required: string[];
}

export interface Blueprint {
  id: string;
  request_kind: string;
  tasks: BlueprintTask[];
}

export type RobotState = "unregistered" | "uncontrolled" | "controlled";

export interface RobotRow {
  robot_id: string;
  capabilities: string[];
  state: RobotState;
  tasks_completed: number;
  pending_deregistration: boolean;
  availability: number;
  utilization: number;
  effectiveness: number | null;
}

export interface MetricsRow {
  t_min: number;
  received: number;
  processed: number;
  unprocessed: number;
  success: number;
  failed: number;
  latency_s: number;
  efficiency: number | null;
}

/** One server-push frame; t is the logical time in ms (null for gap markers). */
export interface Frame {
  t: number | null;
  kind: string;
  payload: Record<string, unknown>;
}

export type TaskStatus = "pending" | "assigned" | "success" | "failure" | "timeout";

export interface PlanView {
  requestId: string;
  blueprintId: string;
  assignments: [string, string][]; // [task id, robot id] in execution order
  taskStatus: Record<string, TaskStatus>;
  outcome: "running" | "success" | "failed";
  reason?: string;
}

export interface CommandAck {
  applied_t_ms: number;
  result: Record<string, unknown>;
}
