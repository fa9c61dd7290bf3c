// Session wiring: connect, pump inputs, render the latest snapshot.

import { InputController } from "./input.js";
import { SessionClient, defaultServerUrl } from "./net.js";
import { EndMsg, MetricsMsg } from "./protocol.js";
import { render } from "./render.js";

const canvas = document.getElementById("world") as HTMLCanvasElement;
const ctx = canvas.getContext("2d")!;
const banner = document.getElementById("banner") as HTMLDivElement;
const readouts = document.getElementById("readouts") as HTMLDivElement;
const endPanel = document.getElementById("end-panel") as HTMLPreElement;

let phase: "idle" | "running" | "finished" = "idle";

function setBanner(text: string, bad = false) {
  banner.textContent = text;
  banner.className = bad ? "banner bad" : "banner";
}

function showMetrics(m: MetricsMsg) {
  const clearance = m.min_clearance === null ? "-" : m.min_clearance.toFixed(2) + " m";
  readouts.innerHTML =
    `density(2.5m) <b>${m.density_2_5.toFixed(3)}</b> /m&sup2; &nbsp; ` +
    `min clearance <b>${clearance}</b> &nbsp; ` +
    `fluency <b>${m.fluency.toFixed(3)}</b> &nbsp; ` +
    `agreement <b>${m.agreement.toFixed(3)}</b>`;
}

function showEnd(m: EndMsg) {
  phase = "finished";
  input.stop();
  setBanner(m.success ? `goal reached in ${m.t_c.toFixed(1)} s` : "trial over (goal not reached)", !m.success);
  if (m.report) {
    const rows = Object.entries(m.report)
      .map(([k, v]) => `${k.padEnd(24)} ${JSON.stringify(v)}`)
      .join("\n");
    endPanel.textContent = `final report  (log: ${m.log})\n\n${rows}`;
    endPanel.style.display = "block";
  }
}

const client = new SessionClient(defaultServerUrl(window.location), {
  onStatus: (s) => {
    if (s === "open") {
      phase = "running";
      setBanner("connected - drive with arrows / WASD or the joystick pad");
      input.start();
    } else if (s !== "connecting" && phase !== "finished") {
      phase = "finished";
      input.stop();
      setBanner("disconnected - commands dropped", true);
    }
  },
  onMetrics: showMetrics,
  onEnd: showEnd,
});

const input = new InputController(client.send);
input.attach(document);

// virtual joystick pad
const pad = document.getElementById("pad") as HTMLDivElement;
const knob = document.getElementById("knob") as HTMLDivElement;

function padVector(ev: PointerEvent) {
  const rect = pad.getBoundingClientRect();
  const cx = rect.left + rect.width / 2;
  const cy = rect.top + rect.height / 2;
  const x = (ev.clientX - cx) / (rect.width / 2);
  const y = -(ev.clientY - cy) / (rect.height / 2);
  return { x, y };
}

let dragging = false;
pad.addEventListener("pointerdown", (ev) => {
  dragging = true;
  pad.setPointerCapture(ev.pointerId);
  input.setPointerJoystick(padVector(ev));
});
pad.addEventListener("pointermove", (ev) => {
  if (dragging) input.setPointerJoystick(padVector(ev));
});
for (const evName of ["pointerup", "pointercancel"] as const) {
  pad.addEventListener(evName, () => {
    dragging = false;
    input.setPointerJoystick(null);
  });
}

// render loop decoupled from the network: always draw the newest snapshot
function frame() {
  const state = client.latestState;
  if (state) {
    input.setLimits(state.robot.v_max, state.robot.w_max);
    input.setSimTime(state.t);
    render(ctx, state);
    const j = input.joystick;
    knob.style.transform = `translate(${j.x * 34}px, ${-j.y * 34}px)`;
  }
  requestAnimationFrame(frame);
}

setBanner("connecting...");
requestAnimationFrame(frame);
