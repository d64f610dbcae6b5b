import { StateMsg } from "./protocol.js";

// Certification margin the planner uses; h above this renders green.
export const H_MARGIN = 0.05;

export const HISTORY_SECONDS = 30;

export interface Sample {
  t: number;
  h: number;
  correction: number;
}

export function correctionNorm(u: number[], uNom: number[]): number {
  let s = 0;
  for (let i = 0; i < u.length; i++) {
    const d = u[i] - uNom[i];
    s += d * d;
  }
  return Math.sqrt(s);
}

/** Per-joint |u_nom - u|: the "resistance" the operator would feel.
 * (Emulated feedback; there is no haptic hardware behind it.) */
export function correctionBars(msg: StateMsg): number[] {
  return msg.u.map((ui, i) => Math.abs(msg.u_nom[i] - ui));
}

export function hColor(h: number, margin = H_MARGIN): "green" | "amber" | "red" {
  if (h > margin) return "green";
  if (h > 0) return "amber";
  return "red";
}

/** Time-bounded ring of (t, h, correction) samples for the strip charts.
 * Replays can run faster than wall time, so the bound is in message time. */
export class History {
  private buf: Sample[] = [];

  constructor(private spanSeconds = HISTORY_SECONDS) {}

  push(msg: StateMsg): void {
    const last = this.buf[this.buf.length - 1];
    if (last && msg.t < last.t) this.buf = []; // reseed jumped time backwards
    if (last && msg.t === last.t) return; // paused: server repeats the tick
    this.buf.push({ t: msg.t, h: msg.h, correction: correctionNorm(msg.u, msg.u_nom) });
    const cutoff = msg.t - this.spanSeconds;
    let drop = 0;
    while (drop < this.buf.length && this.buf[drop].t < cutoff) drop++;
    if (drop > 0) this.buf.splice(0, drop);
  }

  samples(): readonly Sample[] {
    return this.buf;
  }
}

export type Connection = "connecting" | "open" | "closed";
export type PointerMode = "target" | "drag";

/** Everything the render loop needs; physics state lives server-side only. */
export class ConsoleState {
  latest: StateMsg | null = null;
  connection: Connection = "connecting";
  mode: PointerMode = "target";
  draggingId: string | null = null;
  history = new History();
  lastError = "";
  lastErrorAt = 0;

  push(msg: StateMsg): void {
    this.latest = msg;
    this.history.push(msg);
  }
}
