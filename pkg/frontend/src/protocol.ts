// Wire protocol of the simulation server: JSON text frames over a websocket.
// Inbound: state (20 Hz), metrics (1 Hz), end (once). Outbound: cmd.

export type AgentRow = [number, number, number, number, number, number, number];
// [id, x, y, vx, vy, radius, kind]; kind: 0 pedestrian, 1 trolley, 2 static prop

export interface RobotInfo {
  footprint: number;
  virtual_boundary: number;
  v_max: number;
  w_max: number;
}

export interface StateMsg {
  type: "state";
  t: number;
  pose: [number, number, number];
  exec: [number, number];
  goal: [number, number];
  arena: [number, number];
  robot: RobotInfo;
  agents: AgentRow[];
  contact: { active: boolean; force: number };
  flags: { blocked: boolean; virtual_collision_active: boolean };
  phase: string;
}

export interface MetricsMsg {
  type: "metrics";
  t: number;
  density_2_5: number;
  min_clearance: number | null;
  fluency: number;
  agreement: number;
}

export interface EndMsg {
  type: "end";
  success: boolean;
  t_c: number;
  log: string;
  report: Record<string, unknown> | null;
}

export type ServerMsg = StateMsg | MetricsMsg | EndMsg;

const isNum = (x: unknown): x is number => typeof x === "number" && Number.isFinite(x);
const isPair = (x: unknown): x is [number, number] =>
  Array.isArray(x) && x.length === 2 && x.every(isNum);

function isAgentRow(x: unknown): x is AgentRow {
  return Array.isArray(x) && x.length === 7 && x.every(isNum);
}

export function isStateMsg(m: any): m is StateMsg {
  return (
    m?.type === "state" &&
    isNum(m.t) &&
    Array.isArray(m.pose) && m.pose.length === 3 && m.pose.every(isNum) &&
    isPair(m.exec) && isPair(m.goal) && isPair(m.arena) &&
    m.robot && isNum(m.robot.footprint) && isNum(m.robot.virtual_boundary) &&
    isNum(m.robot.v_max) && isNum(m.robot.w_max) &&
    Array.isArray(m.agents) && m.agents.every(isAgentRow) &&
    m.contact && typeof m.contact.active === "boolean" && isNum(m.contact.force) &&
    m.flags && typeof m.flags.blocked === "boolean" &&
    typeof m.flags.virtual_collision_active === "boolean"
  );
}

export function isMetricsMsg(m: any): m is MetricsMsg {
  return (
    m?.type === "metrics" && isNum(m.t) && isNum(m.density_2_5) &&
    (m.min_clearance === null || isNum(m.min_clearance)) &&
    isNum(m.fluency) && isNum(m.agreement)
  );
}

export function isEndMsg(m: any): m is EndMsg {
  return (
    m?.type === "end" && typeof m.success === "boolean" && isNum(m.t_c) &&
    typeof m.log === "string" &&
    (m.report === null || typeof m.report === "object")
  );
}

export function parseServerMessage(raw: string): ServerMsg | null {
  let data: unknown;
  try {
    data = JSON.parse(raw);
  } catch {
    return null;
  }
  if (isStateMsg(data) || isMetricsMsg(data) || isEndMsg(data)) return data;
  return null;
}

export function encodeCommand(v: number, w: number, t: number): string {
  return JSON.stringify({ type: "cmd", v, w, t });
}
