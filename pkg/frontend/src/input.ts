import { ObstacleMsg } from "./protocol.js";

// One key press nudges one joint by this much (radians).
export const JOG_STEP = 0.05;

// Upper/lower key per joint, e.g. Q raises joint 0, A lowers it.
const JOG_KEYS: [string, string][] = [
  ["KeyQ", "KeyA"],
  ["KeyW", "KeyS"],
  ["KeyE", "KeyD"],
  ["KeyT", "KeyG"],
];

export function jogForKey(
  code: string,
  nJoints: number,
): { joint: number; delta: number } | null {
  for (let joint = 0; joint < Math.min(nJoints, JOG_KEYS.length); joint++) {
    if (code === JOG_KEYS[joint][0]) return { joint, delta: JOG_STEP };
    if (code === JOG_KEYS[joint][1]) return { joint, delta: -JOG_STEP };
  }
  return null;
}

export function jogKeyHelp(nJoints: number): string {
  return JOG_KEYS.slice(0, nJoints)
    .map(([up, down], i) => `${up.slice(3)}/${down.slice(3)} joint ${i}`)
    .join("  ");
}

/** Nearest obstacle to a world point, within a pick radius. */
export function pickObstacle(
  obstacles: ObstacleMsg[],
  world: [number, number],
  radius = 0.25,
): string | null {
  let best: string | null = null;
  let bestDist = radius;
  for (const ob of obstacles) {
    const d = Math.hypot(ob.pos[0] - world[0], ob.pos[1] - world[1]);
    if (d <= bestDist) {
      best = ob.id;
      bestDist = d;
    }
  }
  return best;
}

/** Drops events closer together than the interval; drags are throttled to
 * the server tick rate instead of flooding it per mouse move. */
export class RateLimiter {
  private last = -Infinity;

  constructor(private intervalMs: number) {}

  allow(nowMs: number): boolean {
    if (nowMs - this.last < this.intervalMs) return false;
    this.last = nowMs;
    return true;
  }
}
