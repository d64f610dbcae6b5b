// Wire protocol, version "1". Mirrors the message shapes the server speaks;
// anything that fails validation here is never rendered or sent.

export const PROTOCOL_VERSION = "1";

export interface ObstacleMsg {
  id: string;
  pos: [number, number];
  points: number[][];
}

export interface BubbleMsg {
  center: number[];
  radius: number;
}

export interface StateMsg {
  type: "state";
  v: string;
  t: number;
  q: number[];
  ee: [number, number];
  u_nom: number[];
  u: number[];
  h: number;
  dhdt: number;
  status: string;
  filter_on: boolean;
  paused: boolean;
  obstacles: ObstacleMsg[];
  bubbles: BubbleMsg[];
  plan: { waypoints: number[][] };
  events: string[];
}

export interface ErrorMsg {
  type: "error";
  v: string;
  message: string;
}

export type ServerMsg = StateMsg | ErrorMsg;

export type Command =
  | { type: "jog"; v: string; joint: number; delta_rad: number }
  | { type: "set_target"; v: string; x: number; y: number }
  | { type: "toggle_filter"; v: string; on: boolean }
  | { type: "drag_obstacle"; v: string; id: string; x: number; y: number }
  | { type: "pause"; v: string }
  | { type: "resume"; v: string }
  | { type: "reseed"; v: string; seed: number };

function finite(x: unknown): x is number {
  return typeof x === "number" && Number.isFinite(x);
}

function finiteArray(x: unknown, length?: number): x is number[] {
  if (!Array.isArray(x)) return false;
  if (length !== undefined && x.length !== length) return false;
  return x.every(finite);
}

function validObstacle(o: any): o is ObstacleMsg {
  return o && typeof o.id === "string" && finiteArray(o.pos, 2) &&
    Array.isArray(o.points) && o.points.every((p: unknown) => finiteArray(p, 2));
}

function validBubble(b: any): b is BubbleMsg {
  return b && finiteArray(b.center) && finite(b.radius) && b.radius > 0;
}

export function validateState(msg: any): msg is StateMsg {
  if (!msg || msg.type !== "state" || msg.v !== PROTOCOL_VERSION) return false;
  if (!finite(msg.t) || !finite(msg.h) || !finite(msg.dhdt)) return false;
  const n = Array.isArray(msg.q) ? msg.q.length : 0;
  if (n < 1 || !finiteArray(msg.q, n)) return false;
  if (!finiteArray(msg.u_nom, n) || !finiteArray(msg.u, n)) return false;
  if (!finiteArray(msg.ee, 2)) return false;
  if (typeof msg.status !== "string") return false;
  if (typeof msg.filter_on !== "boolean" || typeof msg.paused !== "boolean") return false;
  if (!Array.isArray(msg.obstacles) || !msg.obstacles.every(validObstacle)) return false;
  if (!Array.isArray(msg.bubbles) || !msg.bubbles.every(validBubble)) return false;
  if (!msg.plan || !Array.isArray(msg.plan.waypoints)) return false;
  if (!Array.isArray(msg.events) ||
      !msg.events.every((e: unknown) => typeof e === "string")) return false;
  return true;
}

export function parseServerMessage(raw: string): ServerMsg | null {
  let msg: any;
  try {
    msg = JSON.parse(raw);
  } catch {
    return null;
  }
  if (msg && msg.type === "error" && msg.v === PROTOCOL_VERSION &&
      typeof msg.message === "string") {
    return msg as ErrorMsg;
  }
  return validateState(msg) ? msg : null;
}

// Commands are validated before they leave the console: a malformed command
// is a bug here, not something the server should have to tolerate.
export function validateCommand(cmd: Command): boolean {
  if (cmd.v !== PROTOCOL_VERSION) return false;
  switch (cmd.type) {
    case "jog":
      return Number.isInteger(cmd.joint) && cmd.joint >= 0 && finite(cmd.delta_rad);
    case "set_target":
      return finite(cmd.x) && finite(cmd.y);
    case "toggle_filter":
      return typeof cmd.on === "boolean";
    case "drag_obstacle":
      return cmd.id.length > 0 && finite(cmd.x) && finite(cmd.y);
    case "pause":
    case "resume":
      return true;
    case "reseed":
      return Number.isInteger(cmd.seed);
    default:
      return false;
  }
}

export const jog = (joint: number, delta_rad: number): Command =>
  ({ type: "jog", v: PROTOCOL_VERSION, joint, delta_rad });
export const setTarget = (x: number, y: number): Command =>
  ({ type: "set_target", v: PROTOCOL_VERSION, x, y });
export const toggleFilter = (on: boolean): Command =>
  ({ type: "toggle_filter", v: PROTOCOL_VERSION, on });
export const dragObstacle = (id: string, x: number, y: number): Command =>
  ({ type: "drag_obstacle", v: PROTOCOL_VERSION, id, x, y });
export const pause = (): Command => ({ type: "pause", v: PROTOCOL_VERSION });
export const resume = (): Command => ({ type: "resume", v: PROTOCOL_VERSION });
export const reseed = (seed: number): Command =>
  ({ type: "reseed", v: PROTOCOL_VERSION, seed });

// The page is normally served by the simulator itself, but ?server=host:port
// points the socket somewhere else (e.g. a replay on another port).
export function wsUrl(loc: { protocol: string; host: string; search: string }): string {
  const scheme = loc.protocol === "https:" ? "wss:" : "ws:";
  const override = new URLSearchParams(loc.search).get("server");
  return `${scheme}//${override ?? loc.host}/ws`;
}
