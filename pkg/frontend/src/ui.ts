/** Three-pane operator console: requests manager (blueprints + injector),
 * planner (plan timelines + live charts), robots manager (fleet table). */

import { ServiceClient, ServiceError } from "./api.js";
import { CHART_SPECS, chartSvg, efficiencyText, seriesPoints, trimNumber } from "./charts.js";
import type { ConsoleState } from "./store.js";
import type { PlanView, TaskStatus } from "./types.js";
import { parseTaskLines, validateBlueprint } from "./validate.js";

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  attrs: Record<string, string> = {},
  children: (Node | string)[] = [],
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  for (const [key, value] of Object.entries(attrs)) node.setAttribute(key, value);
  for (const child of children) node.append(child);
  return node;
}

const STATUS_GLYPH: Record<TaskStatus, string> = {
  pending: "○",
  assigned: "◔",
  success: "●",
  failure: "✕",
  timeout: "⧖",
};

export class Console {
  private root: HTMLElement;
  private client: ServiceClient;
  private state: ConsoleState;
  private noticeTimer: number | undefined;

  constructor(root: HTMLElement, client: ServiceClient, state: ConsoleState) {
    this.root = root;
    this.client = client;
    this.state = state;
    this.root.append(this.buildShell());
  }

  private buildShell(): HTMLElement {
    const shell = el("div", { class: "shell" });
    shell.append(
      el("header", { class: "topbar" }, [
        el("h1", {}, ["Multi-robot orchestration console"]),
        el("span", { id: "connection", class: "badge" }),
        el("span", { id: "notice", class: "notice" }),
        this.buildControls(),
      ]),
      el("div", { id: "warnings", class: "warnings" }),
      el("main", { class: "panes" }, [
        el("section", { class: "pane", id: "pane-rqm" }, [
          el("h2", {}, ["Requests manager"]),
          el("div", { id: "blueprint-list" }),
          this.buildBlueprintForm(),
          this.buildRequestForm(),
        ]),
        el("section", { class: "pane", id: "pane-pln" }, [
          el("h2", {}, ["Planner"]),
          el("div", { id: "plans" }),
          el("div", { id: "charts", class: "charts" }),
        ]),
        el("section", { class: "pane", id: "pane-rbm" }, [
          el("h2", {}, ["Robots manager"]),
          el("div", { id: "robots" }),
          this.buildRobotForm(),
        ]),
      ]),
      el("pre", { id: "event-log", class: "event-log" }),
    );
    return shell;
  }

  private buildControls(): HTMLElement {
    const pause = el("button", {}, ["Pause"]);
    const resume = el("button", {}, ["Resume"]);
    const speed = el("input", { type: "number", value: "1", min: "0.1", step: "0.5", title: "speed" });
    const apply = el("button", {}, ["Set speed"]);
    pause.onclick = () => this.run(() => this.client.pause());
    resume.onclick = () => this.run(() => this.client.resume());
    apply.onclick = () => this.run(() => this.client.setSpeed(Number(speed.value)));
    return el("span", { class: "controls" }, [pause, resume, speed, apply]);
  }

  private buildBlueprintForm(): HTMLElement {
    const kind = el("input", { placeholder: "request kind (Rq2)" });
    const id = el("input", { placeholder: "blueprint id (Pb2)" });
    const tasks = el("textarea", {
      placeholder: "one task per line: T1: C1, C3, C4",
      rows: "4",
    });
    const save = el("button", {}, ["Save blueprint"]);
    save.onclick = () => {
      const blueprint = {
        id: id.value.trim(),
        request_kind: kind.value.trim(),
        tasks: parseTaskLines(tasks.value),
      };
      const problems = validateBlueprint(blueprint);
      if (problems.length > 0) {
        this.notify(`not sent: ${problems.join("; ")}`);
        return;
      }
      this.run(async () => {
        const ack = await this.client.putBlueprint(blueprint.request_kind, blueprint.id, blueprint.tasks);
        await this.refreshBlueprints();
        return ack;
      });
    };
    return el("div", { class: "form" }, [el("h3", {}, ["Edit blueprint"]), kind, id, tasks, save]);
  }

  private buildRequestForm(): HTMLElement {
    const kind = el("input", { placeholder: "request kind", id: "request-kind" });
    const submit = el("button", {}, ["Submit request"]);
    submit.onclick = () =>
      this.run(async () => {
        const ack = await this.client.submitRequest(kind.value.trim());
        this.notify(`request ${(ack.result as any).request_id} accepted at t=${ack.applied_t_ms}ms`);
        return ack;
      });
    return el("div", { class: "form" }, [el("h3", {}, ["Inject request"]), kind, submit]);
  }

  private buildRobotForm(): HTMLElement {
    const id = el("input", { placeholder: "robot id (R2)" });
    const caps = el("input", { placeholder: "capabilities: C2, C4" });
    const register = el("button", {}, ["Register"]);
    register.onclick = () =>
      this.run(async () => {
        const capabilities = caps.value
          .split(/[\s,]+/)
          .map((c) => c.trim())
          .filter(Boolean);
        const ack = await this.client.registerRobot(id.value.trim(), capabilities);
        await this.refreshRobots();
        return ack;
      });
    return el("div", { class: "form" }, [el("h3", {}, ["Register robot"]), id, caps, register]);
  }

  // -- data refresh ---------------------------------------------------------

  async resync(): Promise<void> {
    const [blueprints, robots, metrics] = await Promise.all([
      this.client.getBlueprints(),
      this.client.getRobots(),
      this.client.systemMetrics(),
    ]);
    this.state.blueprints = blueprints;
    this.state.robots = robots;
    this.state.series = metrics.rows;
    this.render();
  }

  async refreshBlueprints(): Promise<void> {
    this.state.blueprints = await this.client.getBlueprints();
    this.render();
  }

  async refreshRobots(): Promise<void> {
    this.state.robots = await this.client.getRobots();
    this.render();
  }

  private run(action: () => Promise<unknown>): void {
    action().catch((error) => {
      if (error instanceof ServiceError) this.notify(`${error.status}: ${error.message}`);
      else this.notify(String(error));
    });
  }

  notify(text: string): void {
    const notice = this.root.querySelector("#notice")!;
    notice.textContent = text;
    window.clearTimeout(this.noticeTimer);
    this.noticeTimer = window.setTimeout(() => (notice.textContent = ""), 6000);
  }

  // -- rendering ---------------------------------------------------------------

  render(): void {
    this.renderConnection();
    this.renderWarnings();
    this.renderBlueprints();
    this.renderPlans();
    this.renderCharts();
    this.renderRobots();
    this.renderLog();
  }

  private renderConnection(): void {
    const badge = this.root.querySelector("#connection")!;
    badge.textContent = this.state.connection;
    badge.className = `badge badge-${this.state.connection}`;
  }

  private renderWarnings(): void {
    const box = this.root.querySelector("#warnings") as HTMLElement;
    box.textContent = "";
    for (const warning of this.state.warnings.slice(-3)) {
      box.append(el("div", { class: "warning" }, [`⚠ metric invariant violated: ${warning}`]));
    }
  }

  private renderBlueprints(): void {
    const list = this.root.querySelector("#blueprint-list") as HTMLElement;
    list.textContent = "";
    if (this.state.blueprints.length === 0) {
      list.append(el("p", { class: "empty" }, ["no blueprints stored"]));
      return;
    }
    for (const pb of this.state.blueprints) {
      const remove = el("button", { class: "small" }, ["remove"]);
      remove.onclick = () =>
        this.run(async () => {
          const ack = await this.client.deleteBlueprint(pb.request_kind);
          await this.refreshBlueprints();
          return ack;
        });
      list.append(
        el("div", { class: "card" }, [
          el("strong", {}, [`${pb.id} ← ${pb.request_kind}`]),
          el("div", {}, [pb.tasks.map((t) => `${t.id}{${t.required.join(",")}}`).join(" → ")]),
          remove,
        ]),
      );
    }
  }

  private renderPlans(): void {
    const box = this.root.querySelector("#plans") as HTMLElement;
    box.textContent = "";
    const plans = [...this.state.plans.values()].slice(-8).reverse();
    if (plans.length === 0) {
      box.append(el("p", { class: "empty" }, ["no plans yet"]));
      return;
    }
    for (const plan of plans) box.append(this.planCard(plan));
  }

  private planCard(plan: PlanView): HTMLElement {
    const steps = plan.assignments.map(([taskId, robotId]) => {
      const status = plan.taskStatus[taskId] ?? "pending";
      return el("span", { class: `step step-${status}`, title: status }, [
        `${STATUS_GLYPH[status]} ${taskId}→${robotId}`,
      ]);
    });
    const outcome =
      plan.outcome === "running"
        ? "running"
        : plan.outcome === "success"
          ? "✓ success"
          : `✕ failed${plan.reason ? ` (${plan.reason})` : ""}`;
    return el("div", { class: `card plan-${plan.outcome}` }, [
      el("strong", {}, [`${plan.requestId} · ${plan.blueprintId}`]),
      el("div", { class: "timeline" }, steps),
      el("div", { class: "outcome" }, [outcome]),
    ]);
  }

  private renderCharts(): void {
    const box = this.root.querySelector("#charts") as HTMLElement;
    box.innerHTML = CHART_SPECS.map((spec) =>
      chartSvg(spec.title, seriesPoints(this.state.series, spec.metric)),
    ).join("");
  }

  private renderRobots(): void {
    const box = this.root.querySelector("#robots") as HTMLElement;
    box.textContent = "";
    const table = el("table", { class: "robots" });
    table.append(
      el("tr", {}, [
        ...["robot", "state", "capabilities", "history", "avail", "util", "effect", ""].map((h) =>
          el("th", {}, [h]),
        ),
      ]),
    );
    for (const robot of this.state.robots) {
      const deregister = el("button", { class: "small" }, ["deregister"]);
      deregister.onclick = () =>
        this.run(async () => {
          const ack = await this.client.deregisterRobot(robot.robot_id);
          await this.refreshRobots();
          if ((ack.result as any).deferred) {
            this.notify(`${robot.robot_id}: deregistering (deferred until its task completes)`);
          }
          return ack;
        });
      const stateText = robot.pending_deregistration
        ? "deregistering (deferred)"
        : robot.state;
      table.append(
        el("tr", {}, [
          el("td", {}, [robot.robot_id]),
          el("td", { class: `state-${robot.state}` }, [stateText]),
          el("td", {}, [robot.capabilities.join(", ")]),
          el("td", {}, [String(robot.tasks_completed)]),
          el("td", {}, [trimNumber(robot.availability)]),
          el("td", {}, [trimNumber(robot.utilization)]),
          el("td", {}, [efficiencyText(robot.effectiveness)]),
          el("td", {}, [deregister]),
        ]),
      );
    }
    box.append(table);
  }

  private renderLog(): void {
    const log = this.root.querySelector("#event-log") as HTMLElement;
    log.textContent = this.state.eventLog.slice(-40).join("\n");
    log.scrollTop = log.scrollHeight;
  }
}
