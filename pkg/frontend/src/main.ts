import { ServiceClient, connectEvents } from "./api.js";
import { applyFrame, initialState, setConnection } from "./store.js";
import { Console } from "./ui.js";

const API_BASE = ""; // console is served by the same origin as the service

function boot(): void {
  const root = document.getElementById("app");
  if (!root) throw new Error("missing #app mount point");
  const client = new ServiceClient(API_BASE);
  const state = initialState();
  const console_ = new Console(root, client, state);

  let renderQueued = false;
  const scheduleRender = () => {
    if (renderQueued) return;
    renderQueued = true;
    requestAnimationFrame(() => {
      renderQueued = false;
      console_.render();
    });
  };

  connectEvents(API_BASE, {
    onFrame: (frame) => {
      const requestId = String(frame.payload["request_id"] ?? "");
      const planless =
        frame.kind === "request_outcome" && requestId !== "" && !state.plans.has(requestId);
      applyFrame(state, frame);
      // robot indicator columns come from /metrics/robots; refresh them
      // when a robot changes state rather than on every frame
      if (frame.kind === "robot_state") {
        void console_.refreshRobots();
      }
      if (planless) {
        // rejected before planning (e.g. no blueprint): no plan card exists,
        // so surface the verdict as a toast
        const reason = frame.payload["reason"] ? ` (${frame.payload["reason"]})` : "";
        console_.notify(`request ${requestId}: ${frame.payload["status"]}${reason}`);
      }
      scheduleRender();
    },
    onConnect: () => {
      setConnection(state, "live");
      void console_.resync().catch(() => setConnection(state, "reconnecting"));
      scheduleRender();
    },
    onDisconnect: () => {
      setConnection(state, "reconnecting");
      scheduleRender();
    },
  });

  console_.render();
}

boot();
