/** HTTP commands, snapshot queries, and the reconnecting event stream. */

import type { Blueprint, BlueprintTask, CommandAck, Frame, MetricsRow, RobotRow } from "./types.js";

export class ServiceError extends Error {
  constructor(
    public status: number,
    message: string,
  ) {
    super(message);
  }
}

async function call<T>(url: string, init?: RequestInit): Promise<T> {
  const response = await fetch(url, init);
  const body = await response.json().catch(() => ({}));
  if (!response.ok) {
    throw new ServiceError(response.status, (body as any).error ?? response.statusText);
  }
  return body as T;
}

function jsonInit(method: string, payload: unknown): RequestInit {
  return {
    method,
    headers: { "content-type": "application/json" },
    body: JSON.stringify(payload),
  };
}

export class ServiceClient {
  constructor(readonly base: string = "") {}

  getBlueprints(): Promise<Blueprint[]> {
    return call(`${this.base}/blueprints`);
  }

  putBlueprint(kind: string, id: string, tasks: BlueprintTask[]): Promise<CommandAck> {
    return call(`${this.base}/blueprints/${encodeURIComponent(kind)}`, jsonInit("PUT", { id, tasks }));
  }

  deleteBlueprint(kind: string): Promise<CommandAck> {
    return call(`${this.base}/blueprints/${encodeURIComponent(kind)}`, { method: "DELETE" });
  }

  getRobots(): Promise<RobotRow[]> {
    return call(`${this.base}/robots`);
  }

  registerRobot(robotId: string, capabilities: string[]): Promise<CommandAck> {
    return call(
      `${this.base}/robots/${encodeURIComponent(robotId)}/register`,
      jsonInit("POST", { capabilities }),
    );
  }

  deregisterRobot(robotId: string): Promise<CommandAck> {
    return call(`${this.base}/robots/${encodeURIComponent(robotId)}/deregister`, { method: "POST" });
  }

  submitRequest(kind: string, id?: string): Promise<CommandAck> {
    return call(`${this.base}/requests`, jsonInit("POST", id ? { kind, id } : { kind }));
  }

  systemMetrics(): Promise<{ t_ms: number; rows: MetricsRow[] }> {
    return call(`${this.base}/metrics/system`);
  }

  robotMetrics(): Promise<Record<string, unknown>[]> {
    return call(`${this.base}/metrics/robots`);
  }

  pause(): Promise<CommandAck> {
    return call(`${this.base}/control/pause`, { method: "POST" });
  }

  resume(): Promise<CommandAck> {
    return call(`${this.base}/control/resume`, { method: "POST" });
  }

  setSpeed(factor: number): Promise<CommandAck> {
    return call(`${this.base}/control/speed`, jsonInit("POST", { factor }));
  }
}

export interface StreamHandlers {
  onFrame: (frame: Frame) => void;
  /** Called on every (re)connect; the console refetches snapshots here. */
  onConnect: () => void;
  onDisconnect: () => void;
}

/** Subscribe to /events with automatic reconnection. Returns a closer. */
export function connectEvents(base: string, handlers: StreamHandlers): () => void {
  let source: EventSource | null = null;
  let closed = false;

  const open = () => {
    if (closed) return;
    source = new EventSource(`${base}/events`);
    source.onopen = () => handlers.onConnect();
    source.onmessage = (event) => {
      try {
        handlers.onFrame(JSON.parse(event.data) as Frame);
      } catch {
        // malformed frame: surface nothing, the stream self-heals
      }
    };
    source.onerror = () => {
      handlers.onDisconnect();
      source?.close();
      if (!closed) setTimeout(open, 1000);
    };
  };

  open();
  return () => {
    closed = true;
    source?.close();
  };
}
