import { StateMsg } from "./protocol.js";
import { Connection } from "./state.js";

// The stock scene: unit links over a square workspace box. The wire protocol
// does not carry link lengths, so the schematic assumes them.
export const LINK_LENGTH = 1;
export const WORLD_HALF = 2.5;

export function fkPoints(q: number[], linkLength = LINK_LENGTH): [number, number][] {
  const pts: [number, number][] = [[0, 0]];
  let angle = 0;
  let x = 0;
  let y = 0;
  for (const qi of q) {
    angle += qi;
    x += linkLength * Math.cos(angle);
    y += linkLength * Math.sin(angle);
    pts.push([x, y]);
  }
  return pts;
}

/** Square world box [-half, half]^2 onto a square canvas, y up. */
export class Viewport {
  constructor(public size: number, public half = WORLD_HALF) {}

  toPixel(p: [number, number]): [number, number] {
    const s = this.size / (2 * this.half);
    return [(p[0] + this.half) * s, (this.half - p[1]) * s];
  }

  toWorld(px: [number, number]): [number, number] {
    const s = (2 * this.half) / this.size;
    return [px[0] * s - this.half, this.half - px[1] * s];
  }

  scale(worldLength: number): number {
    return worldLength * (this.size / (2 * this.half));
  }
}

/** End-effector position of the final plan waypoint; the scene's target
 * marker. Survives page reloads, unlike a locally remembered click. */
export function planTarget(msg: StateMsg): [number, number] | null {
  const wps = msg.plan.waypoints;
  if (wps.length === 0) return null;
  const pts = fkPoints(wps[wps.length - 1]);
  return pts[pts.length - 1];
}

const ARM_COLOR = "#6fb7ff";
const ARM_DISABLED = "#c76f6f";

export function drawScene(
  ctx: CanvasRenderingContext2D,
  view: Viewport,
  msg: StateMsg | null,
  connection: Connection,
): void {
  const size = view.size;
  ctx.clearRect(0, 0, size, size);
  ctx.fillStyle = "#10141a";
  ctx.fillRect(0, 0, size, size);

  // reach circle and axes
  ctx.strokeStyle = "#232b36";
  ctx.lineWidth = 1;
  ctx.beginPath();
  const [cx, cy] = view.toPixel([0, 0]);
  ctx.arc(cx, cy, view.scale(2 * LINK_LENGTH), 0, 2 * Math.PI);
  ctx.stroke();
  ctx.beginPath();
  ctx.moveTo(0, cy);
  ctx.lineTo(size, cy);
  ctx.moveTo(cx, 0);
  ctx.lineTo(cx, size);
  ctx.stroke();

  if (msg) {
    const target = planTarget(msg);
    if (target) {
      const [tx, ty] = view.toPixel(target);
      ctx.strokeStyle = "#46d46a";
      ctx.lineWidth = 2;
      ctx.beginPath();
      ctx.moveTo(tx - 7, ty);
      ctx.lineTo(tx + 7, ty);
      ctx.moveTo(tx, ty - 7);
      ctx.lineTo(tx, ty + 7);
      ctx.stroke();
    }

    for (const ob of msg.obstacles) {
      ctx.fillStyle = "#ffb24d";
      for (const pt of ob.points) {
        const [px, py] = view.toPixel([ob.pos[0] + pt[0], ob.pos[1] + pt[1]]);
        ctx.beginPath();
        ctx.arc(px, py, 4, 0, 2 * Math.PI);
        ctx.fill();
      }
      const [ox, oy] = view.toPixel(ob.pos);
      ctx.strokeStyle = "#ffb24d55";
      ctx.beginPath();
      ctx.arc(ox, oy, 9, 0, 2 * Math.PI);
      ctx.stroke();
    }

    const joints = fkPoints(msg.q).map((p) => view.toPixel(p));
    ctx.strokeStyle = msg.filter_on ? ARM_COLOR : ARM_DISABLED;
    ctx.lineCap = "round";
    ctx.lineWidth = Math.max(4, view.scale(0.1));
    ctx.beginPath();
    ctx.moveTo(joints[0][0], joints[0][1]);
    for (const [jx, jy] of joints.slice(1)) ctx.lineTo(jx, jy);
    ctx.stroke();
    ctx.fillStyle = "#dde6f0";
    for (const [jx, jy] of joints) {
      ctx.beginPath();
      ctx.arc(jx, jy, 4, 0, 2 * Math.PI);
      ctx.fill();
    }
  }

  if (connection !== "open") {
    ctx.fillStyle = "rgba(16, 20, 26, 0.72)";
    ctx.fillRect(0, 0, size, size);
    ctx.fillStyle = "#e8a0a0";
    ctx.font = "16px system-ui, sans-serif";
    ctx.textAlign = "center";
    ctx.fillText(
      connection === "closed" ? "disconnected, retrying…" : "connecting…",
      size / 2, size / 2,
    );
  }
}

/** Configuration-space inset: the wrapped joint square with the bubble
 * cover, the plan polyline, and the current configuration. */
export function drawInset(
  ctx: CanvasRenderingContext2D,
  size: number,
  msg: StateMsg | null,
): void {
  ctx.clearRect(0, 0, size, size);
  ctx.fillStyle = "#10141a";
  ctx.fillRect(0, 0, size, size);
  ctx.strokeStyle = "#232b36";
  ctx.strokeRect(0.5, 0.5, size - 1, size - 1);
  if (!msg || msg.q.length < 2) return;

  const toPx = (q: number[]): [number, number] => [
    ((q[0] + Math.PI) / (2 * Math.PI)) * size,
    ((Math.PI - q[1]) / (2 * Math.PI)) * size,
  ];
  const rad = (r: number) => (r / (2 * Math.PI)) * size;

  for (const b of msg.bubbles) {
    const [bx, by] = toPx(b.center);
    ctx.strokeStyle = "#3a6ea533";
    ctx.fillStyle = "#3a6ea51a";
    ctx.beginPath();
    ctx.arc(bx, by, rad(b.radius), 0, 2 * Math.PI);
    ctx.fill();
    ctx.stroke();
  }

  const wps = msg.plan.waypoints;
  if (wps.length > 1) {
    ctx.strokeStyle = "#46d46a88";
    ctx.lineWidth = 1.5;
    ctx.beginPath();
    const [sx, sy] = toPx(wps[0]);
    ctx.moveTo(sx, sy);
    for (const w of wps.slice(1)) {
      const [wx, wy] = toPx(w);
      ctx.lineTo(wx, wy);
    }
    ctx.stroke();
  }

  const [qx, qy] = toPx(msg.q);
  ctx.fillStyle = "#6fb7ff";
  ctx.beginPath();
  ctx.arc(qx, qy, 4, 0, 2 * Math.PI);
  ctx.fill();
}
