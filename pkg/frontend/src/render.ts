// Canvas rendering of the live world: arena, agents by kind, robot with
// footprint and virtual boundary, heading, contact flash, goal marker.

import { StateMsg } from "./protocol.js";

const KIND_COLORS = ["#4878b0", "#e08a2e", "#8a8a8a"]; // pedestrian, trolley, prop

export function render(ctx: CanvasRenderingContext2D, state: StateMsg): void {
  const canvas = ctx.canvas;
  const [aw, ah] = state.arena;
  const scale = Math.min(canvas.width / aw, canvas.height / ah);

  ctx.save();
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  ctx.translate(0, canvas.height);
  ctx.scale(scale, -scale);

  // arena
  ctx.fillStyle = "#fafafa";
  ctx.fillRect(0, 0, aw, ah);
  ctx.lineWidth = 0.05;
  ctx.strokeStyle = "#444";
  ctx.strokeRect(0, 0, aw, ah);

  // goal
  const [gx, gy] = state.goal;
  ctx.beginPath();
  ctx.arc(gx, gy, 0.25, 0, 2 * Math.PI);
  ctx.fillStyle = "#2f9e44";
  ctx.fill();
  ctx.beginPath();
  ctx.setLineDash([0.2, 0.2]);
  ctx.arc(gx, gy, 3.0, 0, 2 * Math.PI);
  ctx.strokeStyle = "#2f9e44";
  ctx.lineWidth = 0.03;
  ctx.stroke();
  ctx.setLineDash([]);

  // agents
  for (const [, x, y, vx, vy, r, kind] of state.agents) {
    ctx.beginPath();
    ctx.arc(x, y, r, 0, 2 * Math.PI);
    ctx.fillStyle = KIND_COLORS[kind] ?? "#999";
    ctx.fill();
    ctx.beginPath();
    ctx.moveTo(x, y);
    ctx.lineTo(x + vx * 0.5, y + vy * 0.5);
    ctx.strokeStyle = "#23406b";
    ctx.lineWidth = 0.04;
    ctx.stroke();
  }

  // robot
  const [rx, ry, th] = state.pose;
  const rb = state.robot;
  ctx.beginPath();
  ctx.arc(rx, ry, rb.footprint, 0, 2 * Math.PI);
  ctx.fillStyle = state.contact.active ? "#d7263d" : "#1d3557";
  ctx.fill();
  ctx.beginPath();
  ctx.moveTo(rx, ry);
  ctx.lineTo(rx + rb.footprint * 1.6 * Math.cos(th), ry + rb.footprint * 1.6 * Math.sin(th));
  ctx.strokeStyle = "#fff";
  ctx.lineWidth = 0.07;
  ctx.stroke();

  // virtual boundary shell, highlighted on violation
  ctx.beginPath();
  ctx.arc(rx, ry, rb.virtual_boundary, 0, 2 * Math.PI);
  ctx.strokeStyle = state.flags.virtual_collision_active ? "#d7263d" : "#74a3d4";
  ctx.lineWidth = state.flags.virtual_collision_active ? 0.08 : 0.04;
  ctx.stroke();

  // contact flash halo
  if (state.contact.active) {
    ctx.beginPath();
    ctx.arc(rx, ry, rb.footprint + 0.15, 0, 2 * Math.PI);
    ctx.strokeStyle = "rgba(215,38,61,0.7)";
    ctx.lineWidth = 0.1;
    ctx.stroke();
  }

  ctx.restore();

  // textual overlays in screen space
  ctx.fillStyle = "#111";
  ctx.font = "13px system-ui, sans-serif";
  ctx.fillText(`t = ${state.t.toFixed(1)} s`, 8, 16);
  if (state.flags.blocked) {
    ctx.fillStyle = "#d7263d";
    ctx.fillText("BLOCKED", 8, 32);
  }
}
